"""Piano-roll data model, lead-sheet ingestion, transposition and binarisation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

N_STEPS = 48
N_PITCHES = 84
STEPS_PER_BEAT = 12
BEATS_PER_BAR = 4
N_BARS = 8
LOWEST_MIDI = 24  # C1 -> row 0
HIGHEST_MIDI = LOWEST_MIDI + N_PITCHES - 1  # B7 -> row 83
CHORD_TRACK_BASE_ROW = 24  # octave-3 rendering of lead-sheet chord labels

LEADSHEET_TRACKS = ("melody", "chord")
ARRANGEMENT_TRACKS = ("strings", "piano", "guitar", "drums", "bass")

QUALITY_INTERVALS = {"maj": (0, 4, 7), "min": (0, 3, 7)}


class DataError(ValueError):
    """Malformed or unsupported musical input."""


@dataclass(frozen=True)
class Phrase:
    """Binary multi-track piano-roll: ``bars`` has shape (B, 48, 84, N)."""

    bars: np.ndarray
    tracks: tuple[str, ...]

    def __post_init__(self):
        bars = np.asarray(self.bars)
        if bars.ndim != 4 or bars.shape[1:3] != (N_STEPS, N_PITCHES):
            raise DataError(f"phrase bars must have shape (B, {N_STEPS}, {N_PITCHES}, N), got {bars.shape}")
        if bars.shape[3] != len(self.tracks):
            raise DataError(f"{bars.shape[3]} track planes but {len(self.tracks)} track names")
        if bars.dtype != bool:
            if not np.isin(bars, (0, 1)).all():
                raise DataError("phrase data must be binary")
            bars = bars.astype(bool)
        else:
            bars = bars.copy()
        bars.setflags(write=False)
        object.__setattr__(self, "bars", bars)
        object.__setattr__(self, "tracks", tuple(self.tracks))

    @classmethod
    def leadsheet(cls, bars) -> "Phrase":
        bars = np.asarray(bars)
        if bars.ndim != 4 or bars.shape[0] != N_BARS or bars.shape[3] != 2:
            raise DataError(f"lead-sheet phrases are ({N_BARS}, 48, 84, 2), got {bars.shape}")
        return cls(bars, LEADSHEET_TRACKS)

    @classmethod
    def arrangement(cls, bars) -> "Phrase":
        bars = np.asarray(bars)
        if bars.ndim != 4 or bars.shape[3] != 5:
            raise DataError(f"arrangement phrases have 5 tracks, got {bars.shape}")
        return cls(bars, ARRANGEMENT_TRACKS)

    @property
    def n_bars(self) -> int:
        return self.bars.shape[0]

    def track(self, name_or_index) -> np.ndarray:
        return self.bars[..., track_index(self.tracks, name_or_index)]

    def __eq__(self, other):
        return (
            isinstance(other, Phrase)
            and self.tracks == other.tracks
            and np.array_equal(self.bars, other.bars)
        )

    def __hash__(self):
        return hash((self.tracks, self.bars.tobytes()))


def track_index(tracks: Sequence[str], name_or_index) -> int:
    if isinstance(name_or_index, (int, np.integer)):
        if not -len(tracks) <= name_or_index < len(tracks):
            raise DataError(f"track index {name_or_index} out of range")
        return int(name_or_index) % len(tracks)
    try:
        return list(tracks).index(name_or_index)
    except ValueError:
        raise DataError(f"unknown track {name_or_index!r}; have {list(tracks)}") from None


# ---------------------------------------------------------------------------
# Lead-sheet documents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MelodyNote:
    pitch: int
    start: float
    duration: float


@dataclass(frozen=True)
class ChordEvent:
    root: int
    quality: str
    start: float
    duration: float


@dataclass(frozen=True)
class LeadSheetDocument:
    """Melody line plus chord labels, timed in beats.

    JSON schema::

        {"key": 0-11, "mode": "major" | "minor", "beats_per_bar": 4,
         "melody": [{"pitch": midi, "start": beats, "duration": beats}, ...],
         "chords": [{"root": 0-11, "quality": "maj" | "min",
                     "start": beats, "duration": beats}, ...]}
    """

    key: int = 0
    mode: str = "major"
    melody: tuple[MelodyNote, ...] = field(default_factory=tuple)
    chords: tuple[ChordEvent, ...] = field(default_factory=tuple)
    beats_per_bar: int = BEATS_PER_BAR

    def __post_init__(self):
        if not (isinstance(self.key, (int, np.integer)) and 0 <= self.key < 12):
            raise DataError(f"key must be a pitch class 0-11, got {self.key!r}")
        if self.mode not in ("major", "minor"):
            raise DataError(f"mode must be 'major' or 'minor', got {self.mode!r}")
        if self.beats_per_bar != BEATS_PER_BAR:
            raise DataError(f"only {BEATS_PER_BAR}/4 lead sheets are supported")
        for ev in self.melody + self.chords:
            if not (math.isfinite(ev.start) and math.isfinite(ev.duration)):
                raise DataError("event times must be finite")
            if ev.start < 0 or ev.duration <= 0:
                raise DataError(f"invalid event timing start={ev.start} duration={ev.duration}")
        for ch in self.chords:
            if not 0 <= ch.root < 12 or ch.quality not in QUALITY_INTERVALS:
                raise DataError(f"invalid chord {ch}")
        for voice, events in (("melody", self.melody), ("chords", self.chords)):
            ordered = sorted(events, key=lambda e: e.start)
            for a, b in zip(ordered, ordered[1:]):
                if b.start < a.start + a.duration - 1e-9:
                    raise DataError(f"overlapping {voice} events at beat {b.start}")

    @classmethod
    def from_dict(cls, obj: dict) -> "LeadSheetDocument":
        try:
            return cls(
                key=int(obj.get("key", 0)),
                mode=obj.get("mode", "major"),
                beats_per_bar=int(obj.get("beats_per_bar", BEATS_PER_BAR)),
                melody=tuple(
                    MelodyNote(int(n["pitch"]), float(n["start"]), float(n["duration"]))
                    for n in obj.get("melody", [])
                ),
                chords=tuple(
                    ChordEvent(int(c["root"]), str(c["quality"]), float(c["start"]), float(c["duration"]))
                    for c in obj.get("chords", [])
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"malformed lead-sheet document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "LeadSheetDocument":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"lead sheet is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DataError("lead-sheet JSON must be an object")
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "mode": self.mode,
            "beats_per_bar": self.beats_per_bar,
            "melody": [{"pitch": n.pitch, "start": n.start, "duration": n.duration} for n in self.melody],
            "chords": [
                {"root": c.root, "quality": c.quality, "start": c.start, "duration": c.duration}
                for c in self.chords
            ],
        }


def _span(start: float, duration: float) -> tuple[int, int]:
    lo = int(round(start * STEPS_PER_BEAT))
    hi = int(round((start + duration) * STEPS_PER_BEAT))
    return lo, max(hi, lo + 1)


def chord_rows(root: int, quality: str, base_row: int = CHORD_TRACK_BASE_ROW) -> list[int]:
    """Root-position triad rows above ``base_row``."""
    return [base_row + root + iv for iv in QUALITY_INTERVALS[quality]]


def ingest_leadsheet(doc: LeadSheetDocument, transpose: bool = False) -> list[Phrase]:
    """Render a lead sheet to two-track piano-rolls, split into 8-bar phrases.

    Bars beyond the last full multiple of eight are dropped.
    """
    ends = [_span(e.start, e.duration)[1] for e in doc.melody + doc.chords]
    total_bars = math.ceil(max(ends) / N_STEPS) if ends else 0
    if total_bars < N_BARS:
        raise DataError(f"phrase too short: {total_bars} bars, need at least {N_BARS}")
    roll = np.zeros((total_bars * N_STEPS, N_PITCHES, 2), dtype=bool)
    dropped = 0
    for note in doc.melody:
        if not LOWEST_MIDI <= note.pitch <= HIGHEST_MIDI:
            dropped += 1
            continue
        lo, hi = _span(note.start, note.duration)
        roll[lo:hi, note.pitch - LOWEST_MIDI, 0] = True
    for ch in doc.chords:
        lo, hi = _span(ch.start, ch.duration)
        roll[lo:hi, chord_rows(ch.root, ch.quality), 1] = True
    if dropped:
        logger.warning("dropped %d melody notes outside MIDI %d-%d", dropped, LOWEST_MIDI, HIGHEST_MIDI)
    n_phrases = total_bars // N_BARS
    bars = roll[: n_phrases * N_BARS * N_STEPS].reshape(n_phrases, N_BARS, N_STEPS, N_PITCHES, 2)
    phrases = [Phrase(b, LEADSHEET_TRACKS) for b in bars]
    if transpose:
        phrases = [transpose_to_c(p, doc.key) for p in phrases]
    return phrases


def transposition_shift(key: int) -> int:
    """Semitone shift taking ``key`` to C, the smaller of -key and 12-key in magnitude."""
    key %= 12
    down, up = -key, 12 - key
    return down if abs(down) <= abs(up) else up


def shift_rows(roll: np.ndarray, shift: int) -> np.ndarray:
    """Shift the pitch axis (second to last) of a roll; cells leaving the range are dropped."""
    out = np.zeros_like(roll)
    if shift == 0:
        out[...] = roll
    elif abs(shift) < roll.shape[-1]:
        if shift > 0:
            out[..., shift:] = roll[..., :-shift]
        else:
            out[..., :shift] = roll[..., -shift:]
    return out


def transpose_to_c(phrase: Phrase, key: int) -> Phrase:
    return transpose(phrase, transposition_shift(key))


def transpose(phrase: Phrase, shift: int) -> Phrase:
    """Shift every pitched track by ``shift`` semitones; drums stay put."""
    if shift == 0:
        return phrase
    bars = np.array(phrase.bars)
    for i, name in enumerate(phrase.tracks):
        if name != "drums":
            bars[..., i] = shift_rows(bars[..., i], shift)
    return Phrase(bars, phrase.tracks)


def binarize(values, tracks: Sequence[str] | None = None) -> np.ndarray:
    """Threshold generator output (..., 48, 84, N) at 0.

    The melody track keeps only its highest-valued active pitch per step.
    """
    values = np.asarray(values)
    active = values > 0
    if tracks is not None and "melody" in tracks:
        m = list(tracks).index("melody")
        melody = values[..., m]
        masked = np.where(active[..., m], melody, -np.inf)
        best = np.argmax(masked, axis=-1)
        keep = np.zeros_like(active[..., m])
        np.put_along_axis(keep, best[..., None], True, axis=-1)
        active[..., m] &= keep
    return active
