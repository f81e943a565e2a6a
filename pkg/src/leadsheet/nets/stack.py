"""Table-driven layer stacks with static shape inference.

A stack is described by rows such as ``("transconv", 512, (2, 1), (2, 1), True, "relu")``
or ``("concat", 5)``. Shapes are inferred when the stack is built, so a
topology that cannot produce its declared shapes fails at construction.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..tensor import BatchNorm, Conv2D, ConvTranspose2D, Dense, Module, ShapeError, Tensor, activate, concat, reshape


def row_label(row) -> str:
    kind = row[0]
    if kind in ("conv", "transconv"):
        _, filters, (kh, kw), (sh, sw), *_ = row
        return f"{kind} {filters} {kh}x{kw} ({sh},{sw})"
    if kind == "dense":
        return f"fully-connected {row[1]}"
    if kind == "concat":
        return f"[{row[1]}]"
    if kind == "reshape":
        return "reshape"
    return kind


class LayerStack(Module):
    """Sequential conv / transconv / dense rows with skip-concatenation sites.

    ``map_shapes`` gives the (H, W, C) of every condition map a ``concat`` row
    refers to; ``feature_name`` prefixes concat labels (e.g. ``chord-roll[5]``).
    """

    def __init__(
        self,
        input_shape: tuple[int, ...],
        rows: Sequence[tuple],
        rng: np.random.Generator,
        map_shapes: dict | None = None,
        feature_name: str = "feature",
        dtype=np.float32,
    ):
        self.input_shape = tuple(input_shape)
        self.rows = [tuple(r) for r in rows]
        self.feature_name = feature_name
        self.layers = []
        self.norms = []
        self.shapes: list[tuple[str, tuple[int, ...]]] = []
        map_shapes = map_shapes or {}
        shape = self.input_shape
        for row in self.rows:
            kind = row[0]
            layer = norm = None
            if kind in ("conv", "transconv"):
                _, filters, kernel, stride, use_bn, _act = row
                cls = Conv2D if kind == "conv" else ConvTranspose2D
                layer = cls(shape[2], filters, kernel, stride, rng, dtype)
                if kind == "conv" and (shape[0] < kernel[0] or shape[1] < kernel[1]):
                    raise ShapeError(row_label(row), f"input >= {kernel}", shape)
                shape = layer.output_shape(shape)
                norm = BatchNorm(filters, dtype=dtype) if use_bn else None
            elif kind == "dense":
                _, units, _act = row
                in_features = int(np.prod(shape))
                layer = Dense(in_features, units, rng, dtype)
                shape = (units,)
            elif kind == "reshape":
                target = tuple(row[1])
                if int(np.prod(target)) != int(np.prod(shape)):
                    raise ShapeError("reshape", shape, target)
                shape = target
            elif kind == "concat":
                key = row[1]
                if key not in map_shapes:
                    raise ShapeError(f"{feature_name}[{key}]", "a declared condition map", None)
                mh, mw, mc = map_shapes[key]
                if (mh, mw) != shape[:2]:
                    raise ShapeError(f"{feature_name}[{key}]", shape[:2], (mh, mw))
                shape = (shape[0], shape[1], shape[2] + mc)
            else:
                raise ValueError(f"unknown row kind {kind!r}")
            self.layers.append(layer)
            self.norms.append(norm)
            self.shapes.append((self._label(row), shape))
        self.output_shape = shape

    def _label(self, row) -> str:
        if row[0] == "concat":
            return f"{self.feature_name}[{row[1]}]"
        return row_label(row)

    def children(self):
        for i, m in enumerate(self.layers):
            if m is not None:
                yield f"layer{i}", m
        for i, m in enumerate(self.norms):
            if m is not None:
                yield f"norm{i}", m

    def forward(
        self,
        x: Tensor,
        maps: dict | Sequence | None = None,
        trace: list | None = None,
        collect: list | None = None,
    ) -> Tensor:
        """Run every row. ``trace`` receives (label, shape) pairs, ``collect`` the row outputs."""
        n = x.shape[0]
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError("stack input", ("N",) + self.input_shape, x.shape)
        for row, layer, norm, (label, expected) in zip(self.rows, self.layers, self.norms, self.shapes):
            kind = row[0]
            if kind in ("conv", "transconv"):
                x = layer(x)
                if norm is not None:
                    x = norm(x)
                x = activate(x, row[5])
            elif kind == "dense":
                if x.ndim != 2:
                    x = reshape(x, (n, -1))
                x = activate(layer(x), row[2])
            elif kind == "reshape":
                x = reshape(x, (n,) + tuple(row[1]))
            elif kind == "concat":
                m = maps[row[1]]
                if m.shape[0] != n or m.shape[1:3] != x.shape[1:3]:
                    raise ShapeError(label, (n,) + tuple(x.shape[1:3]) + ("C",), m.shape)
                x = concat([x, m], axis=-1)
            if tuple(x.shape[1:]) != tuple(expected):
                raise ShapeError(label, expected, x.shape[1:])
            if trace is not None:
                trace.append((label, tuple(x.shape[1:])))
            if collect is not None:
                collect.append(x)
        return x
