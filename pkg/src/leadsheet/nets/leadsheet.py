"""Unconditional eight-bar lead-sheet generator and its phrase critic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import RNN, Module, ShapeError, Tensor, broadcast_to, concat, reshape
from .stack import LayerStack
from .topology import BAR_GENERATOR_ROWS, PHRASE_DISCRIMINATOR_ROWS

NOISE_DIM = 32
TEMPORAL_OUTPUTS = 4
TEMPORAL_HIDDEN = 32
TEMPORAL_LAYERS = 2
N_BARS = 8
BAR_INPUT_DIM = 2 * NOISE_DIM + 2 * TEMPORAL_OUTPUTS


@dataclass
class NoiseBundle:
    """The four noise sources; private parts carry a track axis."""

    shared_static: np.ndarray  # (N, 32)
    private_static: np.ndarray  # (N, tracks, 32)
    shared_temporal: np.ndarray  # (N, 32)
    private_temporal: np.ndarray  # (N, tracks, 32)

    @classmethod
    def sample(cls, rng: np.random.Generator, n: int, n_tracks: int = 2, dim: int = NOISE_DIM, dtype=np.float32):
        return cls(
            shared_static=rng.standard_normal((n, dim)).astype(dtype),
            private_static=rng.standard_normal((n, n_tracks, dim)).astype(dtype),
            shared_temporal=rng.standard_normal((n, dim)).astype(dtype),
            private_temporal=rng.standard_normal((n, n_tracks, dim)).astype(dtype),
        )

    def __len__(self):
        return self.shared_static.shape[0]


class TemporalGenerator(RNN):
    """Two recurrent layers mapping one noise vector to a per-bar latent sequence."""

    def __init__(self, rng, n_steps: int = N_BARS, dtype=np.float32):
        super().__init__(NOISE_DIM, TEMPORAL_HIDDEN, TEMPORAL_OUTPUTS, TEMPORAL_LAYERS, rng, dtype)
        self.n_steps = n_steps

    def forward(self, z) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(np.asarray(z))
        if z.ndim == 1:
            z = reshape(z, (1, -1))
        return super().forward(z, self.n_steps)


class LeadSheetGenerator(Module):
    """Shared and per-track temporal generators feeding per-track bar generators."""

    def __init__(self, rng: np.random.Generator, n_tracks: int = 2, n_bars: int = N_BARS, dtype=np.float32):
        self.n_tracks, self.n_bars = n_tracks, n_bars
        self.shared_temporal = TemporalGenerator(rng, n_bars, dtype)
        self.private_temporal = [TemporalGenerator(rng, n_bars, dtype) for _ in range(n_tracks)]
        self.bar_generators = [
            LayerStack((1, 1, BAR_INPUT_DIM), BAR_GENERATOR_ROWS, rng, dtype=dtype) for _ in range(n_tracks)
        ]

    def bar_inputs(self, noise: NoiseBundle, track: int, temporal_override: tuple | None = None) -> Tensor:
        """Per-bar generator inputs for one track, shape (N, bars, 72)."""
        n = len(noise)
        if temporal_override is None:
            shared_t = self.shared_temporal(Tensor(noise.shared_temporal))
            private_t = self.private_temporal[track](Tensor(noise.private_temporal[:, track]))
        else:
            shared_t, private_t = temporal_override
        static = np.concatenate([noise.shared_static, noise.private_static[:, track]], axis=1)
        static = broadcast_to(Tensor(static.reshape(n, 1, -1)), (n, self.n_bars, 2 * NOISE_DIM))
        return concat([static, shared_t, private_t], axis=-1)

    def forward(self, noise: NoiseBundle, trace: list | None = None) -> Tensor:
        n = len(noise)
        tracks = []
        for i, bar_gen in enumerate(self.bar_generators):
            x = reshape(self.bar_inputs(noise, i), (n * self.n_bars, 1, 1, BAR_INPUT_DIM))
            out = bar_gen(x, trace=trace if i == 0 else None)
            tracks.append(reshape(out, (n, self.n_bars, 48, 84, 1)))
        return concat(tracks, axis=-1)


class PhraseDiscriminator(Module):
    """Critic over a whole phrase, bars stacked along time."""

    def __init__(self, rng: np.random.Generator, n_tracks: int = 2, n_bars: int = N_BARS, dtype=np.float32):
        self.n_tracks, self.n_bars = n_tracks, n_bars
        self.stack = LayerStack((n_bars * 48, 84, n_tracks), PHRASE_DISCRIMINATOR_ROWS, rng, dtype=dtype)

    def forward(self, x: Tensor, trace: list | None = None) -> Tensor:
        expected = (self.n_bars, 48, 84, self.n_tracks)
        if tuple(x.shape[1:]) != expected:
            raise ShapeError("phrase discriminator input", ("N",) + expected, x.shape)
        n = x.shape[0]
        x = reshape(x, (n, self.n_bars * 48, 84, self.n_tracks))
        return self.stack(x, trace=trace)
