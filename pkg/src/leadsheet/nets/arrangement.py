"""Feature-conditioned bar generator, condition encoders and conditioned critics."""

from __future__ import annotations

import numpy as np

from ..tensor import Module, ShapeError, Tensor, concat, reshape
from ..tensor.nn import replicate_channels
from .stack import LayerStack
from .topology import (
    DISCRIMINATOR_ROWS,
    ENCODER_CHANNELS,
    ENCODER_ROWS,
    FEATURE_INPUT_SHAPES,
    FEATURES,
    GENERATOR_ROWS,
)

N_TRACKS = 5
Z_DIM = 128
Z_SHARED = 64


def check_variant(variant: str) -> str:
    if variant not in FEATURES:
        raise ValueError(f"unknown feature variant {variant!r}; expected one of {FEATURES}")
    return variant


class ConditionEncoder(Module):
    """Embeds one harmonic feature into the indexed maps used at skip sites."""

    def __init__(self, variant: str, rng: np.random.Generator, dtype=np.float32):
        self.variant = check_variant(variant)
        h, w = FEATURE_INPUT_SHAPES[variant]
        self.input_shape = (h, w)
        self.stack = LayerStack((h, w, 1), ENCODER_ROWS[variant], rng, dtype=dtype) if ENCODER_ROWS[variant] else None
        shapes = [shape for _, shape in self.stack.shapes] if self.stack else []
        if variant != "chord-roll":
            shapes = [(h, w, ENCODER_CHANNELS)] + shapes
        self.map_shapes = dict(enumerate(shapes))

    def forward(self, feature) -> list[Tensor]:
        feature = feature if isinstance(feature, Tensor) else Tensor(np.asarray(feature))
        if tuple(feature.shape[1:]) != self.input_shape:
            raise ShapeError(f"{self.variant} encoder input", ("N",) + self.input_shape, feature.shape)
        n = feature.shape[0]
        x = reshape(feature, (n,) + self.input_shape + (1,))
        maps = []
        if self.variant != "chord-roll":
            maps.append(replicate_channels(x, ENCODER_CHANNELS))
        if self.stack is not None:
            self.stack(x, collect=maps)
        return maps


def sample_arrangement_noise(rng: np.random.Generator, n: int, n_tracks: int = N_TRACKS, dtype=np.float32) -> np.ndarray:
    """Per-track latent (N, tracks, 128) = 64 shared dims followed by 64 private dims."""
    shared = rng.standard_normal((n, 1, Z_SHARED)).astype(dtype)
    private = rng.standard_normal((n, n_tracks, Z_DIM - Z_SHARED)).astype(dtype)
    return np.concatenate([np.repeat(shared, n_tracks, axis=1), private], axis=2)


class ArrangementGenerator(Module):
    """Five private transposed-conv trunks sharing one condition encoder."""

    def __init__(self, variant: str, rng: np.random.Generator, n_tracks: int = N_TRACKS, dtype=np.float32):
        self.variant = check_variant(variant)
        self.n_tracks = n_tracks
        self.encoder = ConditionEncoder(variant, rng, dtype)
        self.trunks = [
            LayerStack((1, 1, Z_DIM), GENERATOR_ROWS[variant], rng, self.encoder.map_shapes, variant, dtype)
            for _ in range(n_tracks)
        ]

    def forward(self, z, feature=None, maps=None, trace: list | None = None) -> Tensor:
        """``z`` is (N, tracks, 128); pass either the raw ``feature`` or precomputed ``maps``."""
        z = z if isinstance(z, Tensor) else Tensor(np.asarray(z))
        if z.ndim != 3 or tuple(z.shape[1:]) != (self.n_tracks, Z_DIM):
            raise ShapeError("arrangement generator noise", ("N", self.n_tracks, Z_DIM), z.shape)
        if maps is None:
            maps = self.encoder(feature)
        n = z.shape[0]
        outputs = []
        for i, trunk in enumerate(self.trunks):
            zi = reshape(z[:, i, :], (n, 1, 1, Z_DIM))
            outputs.append(trunk(zi, maps, trace=trace if i == 0 else None))
        return concat(outputs, axis=-1)


class ConditionedDiscriminator(Module):
    """Critic over one five-track bar with the condition injected at the tabled depths."""

    def __init__(self, variant: str, rng: np.random.Generator, n_tracks: int = N_TRACKS, dtype=np.float32):
        self.variant = check_variant(variant)
        self.n_tracks = n_tracks
        self.encoder = ConditionEncoder(variant, rng, dtype) if variant == "chroma-roll" else None
        if variant == "chord-roll":
            map_shapes = {6: (48, 84, 1)}
        elif variant == "chroma-beats":
            map_shapes = {0: (4, 12, ENCODER_CHANNELS)}
        else:
            map_shapes = self.encoder.map_shapes
        self.stack = LayerStack((48, 84, n_tracks), DISCRIMINATOR_ROWS[variant], rng, map_shapes, variant, dtype)

    def condition_maps(self, feature) -> dict:
        feature = feature if isinstance(feature, Tensor) else Tensor(np.asarray(feature))
        expected = FEATURE_INPUT_SHAPES[self.variant]
        if tuple(feature.shape[1:]) != expected:
            raise ShapeError(f"{self.variant} condition", ("N",) + expected, feature.shape)
        n = feature.shape[0]
        if self.variant == "chord-roll":
            return {6: reshape(feature, (n, 48, 84, 1))}
        if self.variant == "chroma-beats":
            return {0: replicate_channels(feature, ENCODER_CHANNELS)}
        return dict(enumerate(self.encoder(feature)))

    def forward(self, x, feature, trace: list | None = None) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
        if tuple(x.shape[1:]) != (48, 84, self.n_tracks):
            raise ShapeError("conditioned discriminator input", ("N", 48, 84, self.n_tracks), x.shape)
        return self.stack(x, self.condition_maps(feature), trace=trace)
