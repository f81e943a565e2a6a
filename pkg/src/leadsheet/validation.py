"""Input coercion shared by the estimators and the command line."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .pianoroll import N_BARS, N_PITCHES, N_STEPS, DataError, Phrase


def _stack(X) -> np.ndarray:
    if isinstance(X, Phrase):
        return X.bars[None]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], Phrase):
        return np.stack([p.bars for p in X])
    return np.asarray(X)


def check_binary(X: np.ndarray) -> np.ndarray:
    if X.dtype == bool:
        return X
    if not np.isin(X, (0, 1)).all():
        raise DataError("piano-roll data must be binary")
    return X.astype(bool)


def check_phrases(X, n_tracks: int, n_bars: int = N_BARS) -> np.ndarray:
    """Phrases as a binary (M, bars, 48, 84, tracks) array."""
    X = _stack(X)
    if X.ndim == 4:
        X = X[None]
    expected = (n_bars, N_STEPS, N_PITCHES, n_tracks)
    if X.ndim != 5 or X.shape[1:] != expected:
        raise DataError(f"expected phrases shaped (M, {', '.join(map(str, expected))}), got {X.shape}")
    if X.shape[0] == 0:
        raise DataError("no phrases given")
    return check_binary(X)


def check_bars(X, n_tracks: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Flatten any leading axes of (..., 48, 84, tracks); returns the bars and the leading shape."""
    X = _stack(X)
    if X.ndim < 3 or X.shape[-3:] != (N_STEPS, N_PITCHES, n_tracks):
        raise DataError(f"expected bars shaped (..., {N_STEPS}, {N_PITCHES}, {n_tracks}), got {X.shape}")
    lead = X.shape[:-3]
    bars = X.reshape((-1, N_STEPS, N_PITCHES, n_tracks))
    if bars.shape[0] == 0:
        raise DataError("no bars given")
    return check_binary(bars), lead


def check_random_state(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def parse_tracks(text: str | Sequence[str]) -> tuple[str, ...]:
    names = text.split(",") if isinstance(text, str) else list(text)
    names = tuple(n.strip() for n in names if n.strip())
    if not names:
        raise DataError("at least one track name is required")
    return names
