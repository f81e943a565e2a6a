"""Objective metrics for generated piano-rolls: EB, UPC, QN and TD.

Inputs are binary arrays shaped (..., 48, 84, N): any number of leading axes
(phrases, bars) followed by one bar's time, pitch and track axes.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .pianoroll import N_PITCHES, N_STEPS, STEPS_PER_BEAT, DataError

QUALIFIED_MIN_STEPS = N_STEPS // 16  # a 16th note

_radii = np.array([1.0, 1.0, 0.5])
_angles = np.array([7 * math.pi / 6, 3 * math.pi / 2, 2 * math.pi / 3])
_pcs = np.arange(12)
# (12, 6): sin/cos pairs for fifths, minor thirds and major thirds
TONAL_CENTROID = np.stack(
    [f(_pcs * a) * r for r, a in zip(_radii, _angles) for f in (np.sin, np.cos)], axis=1
)


class Note(NamedTuple):
    pitch: int
    onset: int
    length: int


def extract_notes(bar) -> list[Note]:
    """Maximal runs in each row of one (48, 84) bar."""
    bar = np.asarray(bar, dtype=bool)
    if bar.ndim != 2 or bar.shape[0] != N_STEPS:
        raise DataError(f"expected a ({N_STEPS}, {N_PITCHES}) bar, got {bar.shape}")
    padded = np.zeros((bar.shape[0] + 2, bar.shape[1]), dtype=np.int8)
    padded[1:-1] = bar
    edges = np.diff(padded, axis=0)
    on_t, on_p = np.nonzero(edges == 1)
    off_t, off_p = np.nonzero(edges == -1)
    on = sorted(zip(on_p, on_t))
    off = sorted(zip(off_p, off_t))
    return [Note(int(p), int(s), int(e - s)) for (p, s), (_, e) in zip(on, off)]


def _track_bars(rolls, track: int) -> np.ndarray:
    rolls = np.asarray(rolls)
    if rolls.ndim < 3 or rolls.shape[-3:-1] != (N_STEPS, N_PITCHES):
        raise DataError(f"rolls must be (..., {N_STEPS}, {N_PITCHES}, N), got {rolls.shape}")
    bars = rolls[..., track].reshape(-1, N_STEPS, N_PITCHES).astype(bool)
    if bars.shape[0] == 0:
        raise DataError("at least one bar is required")
    return bars


def empty_bars(rolls, track: int = 0) -> float:
    bars = _track_bars(rolls, track)
    return float((~bars.any(axis=(1, 2))).mean())


def used_pitch_classes(rolls, track: int = 0) -> tuple[float, bool]:
    """Mean pitch classes per non-empty bar; returns (value, defined)."""
    bars = _track_bars(rolls, track)
    pitches = bars.any(axis=1)  # (B, 84)
    pcs = pitches.reshape(-1, N_PITCHES // 12, 12).any(axis=1).sum(axis=1)
    nonempty = pitches.any(axis=1)
    if not nonempty.any():
        return 0.0, False
    return float(pcs[nonempty].mean()), True


def note_lengths(rolls, track: int = 0) -> np.ndarray:
    """Lengths of all maximal runs, bar boundaries ending notes."""
    bars = _track_bars(rolls, track)
    padded = np.zeros((bars.shape[0], N_STEPS + 2, N_PITCHES), dtype=np.int8)
    padded[:, 1:-1] = bars
    edges = np.diff(padded, axis=1).transpose(0, 2, 1)  # (B, 84, 49) in row-major run order
    starts = np.nonzero(edges.reshape(-1, N_STEPS + 1) == 1)[1]
    ends = np.nonzero(edges.reshape(-1, N_STEPS + 1) == -1)[1]
    return ends - starts


def qualified_notes(rolls, track: int = 0) -> tuple[float, bool]:
    """Share of notes lasting at least a 16th; returns (value, defined)."""
    lengths = note_lengths(rolls, track)
    if lengths.size == 0:
        return 1.0, False
    return float((lengths >= QUALIFIED_MIN_STEPS).mean()), True


def beat_chroma(rolls, track: int) -> np.ndarray:
    """Pitch-class activity counts per beat, (beats, 12)."""
    bars = _track_bars(rolls, track)
    beats = bars.reshape(-1, STEPS_PER_BEAT, N_PITCHES // 12, 12)
    return beats.sum(axis=(1, 2)).astype(np.float64)


def tonal_centroids(chroma) -> np.ndarray:
    """L1-normalized chroma (..., 12) to 6-d tonal centroids."""
    chroma = np.asarray(chroma, dtype=np.float64)
    total = chroma.sum(axis=-1, keepdims=True)
    return (chroma / np.where(total > 0, total, 1.0)) @ TONAL_CENTROID


def tonal_distance(rolls, track_a: int = 0, track_b: int = 1) -> tuple[float, bool]:
    """Mean centroid distance over beats where both tracks sound; returns (value, defined)."""
    if track_a == track_b:
        raise DataError("tonal distance needs two distinct tracks")
    ca, cb = beat_chroma(rolls, track_a), beat_chroma(rolls, track_b)
    both = (ca.sum(axis=1) > 0) & (cb.sum(axis=1) > 0)
    if not both.any():
        return float("nan"), False
    dist = np.linalg.norm(tonal_centroids(ca[both]) - tonal_centroids(cb[both]), axis=1)
    return float(dist.mean()), True


@dataclass
class TrackMetrics:
    eb: float
    upc: float
    qn: float
    upc_defined: bool = True
    qn_defined: bool = True


@dataclass
class MetricsReport:
    tracks: dict[str, TrackMetrics]
    td: float | None = None
    td_pair: tuple[str, str] | None = None
    td_defined: bool = True
    iteration: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.td is not None and not math.isfinite(self.td):
            out["td"] = None
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate(rolls, tracks: Sequence[str], td_pair: tuple[str, str] | None = None, iteration=None) -> MetricsReport:
    """Per-track EB/UPC/QN plus TD between ``td_pair`` (default: the first two pitched tracks)."""
    per_track = {}
    for i, name in enumerate(tracks):
        upc, upc_ok = used_pitch_classes(rolls, i)
        qn, qn_ok = qualified_notes(rolls, i)
        per_track[name] = TrackMetrics(empty_bars(rolls, i), upc, qn, upc_ok, qn_ok)
    report = MetricsReport(per_track, iteration=iteration)
    if td_pair is None:
        pitched = [t for t in tracks if t != "drums"]
        td_pair = tuple(pitched[:2]) if len(pitched) >= 2 else None
    if td_pair is not None:
        a, b = (list(tracks).index(t) for t in td_pair)
        report.td, report.td_defined = tonal_distance(rolls, a, b)
        report.td_pair = tuple(td_pair)
    return report
