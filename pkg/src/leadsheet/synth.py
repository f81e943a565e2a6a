"""Deterministic synthetic training corpora in C major.

Lead sheets pair a scale-tone random-walk melody with one diatonic triad per
bar. Multi-track phrases voice the same progressions over five instruments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pianoroll import (
    ARRANGEMENT_TRACKS,
    LOWEST_MIDI,
    N_BARS,
    N_PITCHES,
    N_STEPS,
    QUALITY_INTERVALS,
    STEPS_PER_BEAT,
    ChordEvent,
    LeadSheetDocument,
    MelodyNote,
    Phrase,
    ingest_leadsheet,
)

C_MAJOR = (0, 2, 4, 5, 7, 9, 11)
# degree -> (root pitch class, quality)
DIATONIC = {1: (0, "maj"), 2: (2, "min"), 4: (5, "maj"), 5: (7, "maj"), 6: (9, "min")}
PROGRESSIONS = (
    (1, 4, 5, 1),
    (1, 6, 4, 5),
    (1, 4, 1, 5),
    (6, 4, 1, 5),
    (1, 2, 5, 1),
    (1, 5, 6, 4),
    (4, 5, 1, 1),
    (2, 5, 1, 6),
)
MELODY_RANGE = (60, 84)
SCALE_PITCHES = tuple(p for p in range(MELODY_RANGE[0], MELODY_RANGE[1] + 1) if p % 12 in C_MAJOR)

KICK, SNARE, HAT = 36, 38, 42


@dataclass(frozen=True)
class SyntheticCorpus:
    documents: tuple[LeadSheetDocument, ...]
    leadsheets: tuple[Phrase, ...]
    arrangements: tuple[Phrase, ...]

    def arrangement_bars(self) -> np.ndarray:
        """All multi-track bars stacked as (M, 48, 84, 5)."""
        return np.concatenate([p.bars for p in self.arrangements])


def _progression(rng: np.random.Generator) -> list[tuple[int, str]]:
    first, second = rng.choice(len(PROGRESSIONS), size=2)
    return [DIATONIC[d] for d in PROGRESSIONS[first] + PROGRESSIONS[second]]


def _melody(rng: np.random.Generator, chords: list[tuple[int, str]]) -> list[MelodyNote]:
    notes = []
    idx = int(rng.integers(len(SCALE_PITCHES) // 3, 2 * len(SCALE_PITCHES) // 3))
    prev = None
    for bar, (root, quality) in enumerate(chords):
        tones = {(root + iv) % 12 for iv in QUALITY_INTERVALS[quality]}
        for beat in range(4):
            durations = (1.0,) if rng.random() < 0.6 else (0.5, 0.5)
            for k, dur in enumerate(durations):
                start = bar * 4 + beat + 0.5 * k
                candidates = [idx + s for s in (-2, -1, 1, 2) if 0 <= idx + s < len(SCALE_PITCHES)]
                if beat in (0, 2) and k == 0:
                    strong = [c for c in range(len(SCALE_PITCHES)) if SCALE_PITCHES[c] % 12 in tones and abs(c - idx) <= 3]
                    candidates = [c for c in strong if SCALE_PITCHES[c] != prev] or candidates
                candidates = [c for c in candidates if SCALE_PITCHES[c] != prev]
                idx = int(rng.choice(candidates))
                prev = SCALE_PITCHES[idx]
                notes.append(MelodyNote(prev, start, dur))
    return notes


def synthetic_leadsheet(rng: np.random.Generator) -> tuple[LeadSheetDocument, list[tuple[int, str]]]:
    chords = _progression(rng)
    doc = LeadSheetDocument(
        key=0,
        mode="major",
        melody=tuple(_melody(rng, chords)),
        chords=tuple(ChordEvent(r, q, 4.0 * b, 4.0) for b, (r, q) in enumerate(chords)),
    )
    return doc, chords


def arrange_bar(root: int, quality: str) -> np.ndarray:
    """One bar voiced for strings, piano, guitar, drums and bass, shape (48, 84, 5)."""
    bar = np.zeros((N_STEPS, N_PITCHES, len(ARRANGEMENT_TRACKS)), dtype=bool)
    triad = [root + iv for iv in QUALITY_INTERVALS[quality]]
    row = lambda midi: midi - LOWEST_MIDI  # noqa: E731
    beat = STEPS_PER_BEAT
    for p in triad:  # strings: sustained close triad around C4
        bar[:, row(60 + p), 0] = True
    for b in range(4):  # piano: detached quarter-note block chords an octave up
        for p in triad:
            bar[b * beat : b * beat + 9, row(72 + p), 1] = True
    for e in range(8):  # guitar: eighth-note arpeggio 1-3-5-3
        p = triad[(0, 1, 2, 1)[e % 4]]
        bar[e * 6 : e * 6 + 5, row(48 + p), 2] = True
    for b in range(4):  # drums: kick on 1 and 3, snare on 2 and 4, hat on eighths
        bar[b * beat : b * beat + 3, row(KICK if b % 2 == 0 else SNARE), 3] = True
    for e in range(8):
        bar[e * 6 : e * 6 + 2, row(HAT), 3] = True
    for half in range(2):  # bass: root half notes
        bar[half * 24 : half * 24 + 22, row(36 + root), 4] = True
    return bar


def synthetic_arrangement(chords: list[tuple[int, str]]) -> Phrase:
    return Phrase.arrangement(np.stack([arrange_bar(r, q) for r, q in chords]))


def generate_synthetic_corpus(seed: int, count: int) -> SyntheticCorpus:
    """``count`` lead-sheet phrases and ``count`` multi-track phrases, identical for equal seeds."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    docs, leads, arrs = [], [], []
    for _ in range(count):
        doc, _ = synthetic_leadsheet(rng)
        docs.append(doc)
        leads.extend(ingest_leadsheet(doc))
        arrs.append(synthetic_arrangement(_progression(rng)))
    assert all(p.n_bars == N_BARS for p in leads)
    return SyntheticCorpus(tuple(docs), tuple(leads), tuple(arrs))
