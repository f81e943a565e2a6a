"""Harmonic bar features: chroma-roll, chroma-beats and chord-roll.

The public functions use the musical orientation (pitch x time): chroma-roll
is (12, 48), chroma-beats (12, 4), chord-roll (84, 48). They all accept a
leading batch axis. ``network_features`` returns the time-major layout the
conditioning encoders consume.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .pianoroll import N_PITCHES, N_STEPS, QUALITY_INTERVALS, STEPS_PER_BEAT, DataError

N_BEATS = N_STEPS // STEPS_PER_BEAT
CHORD_ROLL_BASE_ROW = 36  # octave 4
FEATURE_KINDS = ("chord-roll", "chroma-roll", "chroma-beats")


class ChordLabel(NamedTuple):
    root: int
    quality: str

    def __str__(self):
        names = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
        return names[self.root] + ("" if self.quality == "maj" else "m")


# 24 templates: C..B major, then C..B minor. Row order is the tie-break order.
TEMPLATE_LABELS = tuple(ChordLabel(r, q) for q in ("maj", "min") for r in range(12))
TEMPLATES = np.zeros((24, 12))
for _i, _label in enumerate(TEMPLATE_LABELS):
    TEMPLATES[_i, [(_label.root + iv) % 12 for iv in QUALITY_INTERVALS[_label.quality]]] = 1.0


def _as_bars(bars, tracks: Sequence[str] | None) -> np.ndarray:
    """Coerce to (..., 48, 84, N) and drop the drum track."""
    bars = np.asarray(bars)
    if bars.ndim == 2:
        bars = bars[..., None]
    if bars.ndim < 3 or bars.shape[-3:-1] != (N_STEPS, N_PITCHES):
        raise DataError(f"bars must have shape (..., {N_STEPS}, {N_PITCHES}, N), got {bars.shape}")
    if tracks is not None:
        if len(tracks) != bars.shape[-1]:
            raise DataError(f"{bars.shape[-1]} track planes but {len(tracks)} track names")
        keep = [i for i, name in enumerate(tracks) if name != "drums"]
        bars = bars[..., keep]
    return bars


def chroma_roll(bars, tracks: Sequence[str] | None = None) -> np.ndarray:
    """Union over pitched tracks of the octave-folded roll, (..., 12, 48) in {0, 1}."""
    active = _as_bars(bars, tracks).any(axis=-1)  # (..., 48, 84)
    folded = active.reshape(active.shape[:-1] + (N_PITCHES // 12, 12)).any(axis=-2)
    return np.swapaxes(folded, -1, -2).astype(np.float64)


def chroma_beats(croll) -> np.ndarray:
    """Per-beat mean of a chroma-roll, (..., 12, 48) -> (..., 12, 4)."""
    croll = np.asarray(croll, dtype=np.float64)
    if croll.shape[-2:] != (12, N_STEPS):
        raise DataError(f"chroma-roll must be (..., 12, {N_STEPS}), got {croll.shape}")
    return croll.reshape(croll.shape[:-1] + (N_BEATS, STEPS_PER_BEAT)).mean(axis=-1)


def template_scores(chroma) -> np.ndarray:
    """Scores of the 24 templates for chroma vectors (..., 12) -> (..., 24).

    score = sum(c * t) - 0.5 * sum(c * (1 - t))
    """
    chroma = np.asarray(chroma, dtype=np.float64)
    return 1.5 * chroma @ TEMPLATES.T - 0.5 * chroma.sum(axis=-1, keepdims=True)


def recognize_chord_indices(cbeats) -> np.ndarray:
    """Template index per beat, or -1 for silent beats. (..., 12, 4) -> (..., 4)."""
    chroma = np.swapaxes(np.asarray(cbeats, dtype=np.float64), -1, -2)  # (..., 4, 12)
    scores = template_scores(chroma)
    # Relative rounding so that scale-equivalent inputs tie identically.
    scale = np.abs(scores).max(axis=-1, keepdims=True)
    scale[scale == 0] = 1.0
    best = np.argmax(np.round(scores / scale, 9), axis=-1)  # first maximum wins
    return np.where(chroma.sum(axis=-1) > 0, best, -1)


def recognize_chords(cbeats) -> list[ChordLabel | None]:
    """Chord labels of one bar's chroma-beats (12, 4)."""
    cbeats = np.asarray(cbeats)
    if cbeats.shape != (12, N_BEATS):
        raise DataError(f"chroma-beats must be (12, {N_BEATS}), got {cbeats.shape}")
    return [TEMPLATE_LABELS[i] if i >= 0 else None for i in recognize_chord_indices(cbeats)]


def render_chords(indices) -> np.ndarray:
    """Template indices (..., 4) to chord-roll (..., 84, 48); -1 renders silence."""
    indices = np.asarray(indices)
    out = np.zeros(indices.shape[:-1] + (N_PITCHES, N_STEPS))
    rows = np.zeros((25, N_PITCHES))
    rows[:24, CHORD_ROLL_BASE_ROW : CHORD_ROLL_BASE_ROW + 12] = TEMPLATES
    per_beat = rows[indices]  # (..., 4, 84), index -1 picks the silent row
    out[...] = np.repeat(np.swapaxes(per_beat, -1, -2), STEPS_PER_BEAT, axis=-1)
    return out


def chord_roll(bars, tracks: Sequence[str] | None = None) -> np.ndarray:
    """Recognized chords per beat, as root-position triads folded into octave 4."""
    return render_chords(recognize_chord_indices(chroma_beats(chroma_roll(bars, tracks))))


def extract_feature(bars, kind: str, tracks: Sequence[str] | None = None) -> np.ndarray:
    if kind == "chroma-roll":
        return chroma_roll(bars, tracks)
    if kind == "chroma-beats":
        return chroma_beats(chroma_roll(bars, tracks))
    if kind == "chord-roll":
        return chord_roll(bars, tracks)
    raise ValueError(f"unknown feature kind {kind!r}; choose from {FEATURE_KINDS}")


def network_features(bars, kind: str, tracks: Sequence[str] | None = None, dtype=np.float32) -> np.ndarray:
    """Time-major features for the encoders: (..., 48, 84), (..., 48, 12) or (..., 4, 12)."""
    return np.swapaxes(extract_feature(bars, kind, tracks), -1, -2).astype(dtype)


class HarmonicFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer from bars (n, 48, 84, N) to one harmonic feature per bar.

    >>> HarmonicFeatureExtractor("chroma-beats").fit_transform(np.zeros((2, 48, 84, 1))).shape
    (2, 12, 4)
    """

    def __init__(self, kind: str = "chord-roll", tracks: Sequence[str] | None = None, time_major: bool = False):
        self.kind = kind
        self.tracks = tracks
        self.time_major = time_major

    def fit(self, X, y=None):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}; choose from {FEATURE_KINDS}")
        X = _as_bars(X, self.tracks)
        self.n_features_in_ = X.shape[-1]
        return self

    def transform(self, X):
        if self.time_major:
            return network_features(X, self.kind, self.tracks)
        return extract_feature(X, self.kind, self.tracks)
