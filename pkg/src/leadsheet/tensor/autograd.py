"""Reverse-mode automatic differentiation over numpy arrays.

Graphs are recorded eagerly (define-by-run). Every backward rule is written
with the same differentiable primitives used in the forward pass, so the
gradient of a gradient can be taken (``grad(..., create_graph=True)``).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_grad_enabled = True


class ShapeError(ValueError):
    """Raised when an operation receives tensors of incompatible shapes."""

    def __init__(self, node: str, expected, actual):
        self.node = node
        self.expected = expected
        self.actual = actual
        super().__init__(f"{node}: expected shape {expected}, got {actual}")


class GraphError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


@contextlib.contextmanager
def enable_grad():
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = True
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """Dense array that records the operation which produced it."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self.op = "parameter" if requires_grad else "input"
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fns: tuple[Callable, ...] = ()

    # -- array protocol ---------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def __len__(self):
        return len(self.data)

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring grad."""
        leaves = [n for n in _toposort(self) if not n._parents and n.requires_grad]
        grads = grad(self, leaves)
        for leaf, g in zip(leaves, grads):
            leaf.grad = g.data.copy() if leaf.grad is None else leaf.grad + g.data


def _const(value, like: Tensor) -> Tensor:
    return Tensor(np.asarray(value, dtype=like.dtype))


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if like is not None:
        return _const(value, like)
    return Tensor(value)


def _node(data: np.ndarray, op: str, parents: Sequence[Tensor], grad_fns: Sequence[Callable]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fns = tuple(grad_fns)
    else:
        out.requires_grad = False
        out._parents = ()
        out._grad_fns = ()
    return out


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def sum_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Sum ``x`` over broadcast dimensions so that it has ``shape``."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and x.shape[i + lead] != 1
    )
    data = x.data.sum(axis=axes, keepdims=True).reshape(shape)
    return _node(data, "reduce", (x,), (lambda g: broadcast_to(g, x.shape),))


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    data = np.broadcast_to(x.data, shape)
    return _node(data, "broadcast", (x,), (lambda g: sum_to(g, x.shape),))


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    data = a.data + b.data
    return _node(
        data, "add", (a, b), (lambda g: sum_to(g, a.shape), lambda g: sum_to(g, b.shape))
    )


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, "neg", (a,), (lambda g: neg(g),))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return add(a, neg(b))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    data = a.data * b.data
    return _node(
        data,
        "mul",
        (a, b),
        (lambda g: sum_to(mul(g, b), a.shape), lambda g: sum_to(mul(g, a), b.shape)),
    )


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    data = a.data ** a.dtype.type(exponent)

    def grad_fn(g):
        return mul(g, mul(power(a, exponent - 1.0), _const(exponent, a)))

    return _node(data, "pow", (a,), (grad_fn,))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    return mul(a, power(b, -1.0))


def sqrt(a: Tensor) -> Tensor:
    return power(a, 0.5)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", f"(m, k) @ (k, n)", f"{a.shape} @ {b.shape}")
    data = a.data @ b.data
    return _node(
        data,
        "matmul",
        (a, b),
        (lambda g: matmul(g, transpose(b, (1, 0))), lambda g: matmul(transpose(a, (1, 0)), g)),
    )


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", f"{int(np.prod(a.shape))} elements", shape) from None
    return _node(data, "reshape", (a,), (lambda g: reshape(g, a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _node(a.data.transpose(axes), "transpose", (a,), (lambda g: transpose(g, inverse),))


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)
    if axis is None:
        kept = (1,) * a.ndim
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % a.ndim for ax in axes)
        kept = tuple(1 if i in axes else s for i, s in enumerate(a.shape))

    def grad_fn(g):
        return broadcast_to(reshape(g, kept), a.shape)

    return _node(np.asarray(data), "reduce", (a,), (grad_fn,))


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    total = reduce_sum(a, axis, keepdims)
    count = a.size // max(total.size, 1) if total.size else 1
    return mul(total, _const(1.0 / count, a))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        other = tuple(s for i, s in enumerate(t.shape) if i != axis)
        first = tuple(s for i, s in enumerate(tensors[0].shape) if i != axis)
        if t.ndim != ndim or other != first:
            raise ShapeError("concat", tensors[0].shape, t.shape)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])
    fns = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        key = (slice(None),) * axis + (slice(int(lo), int(hi)),)
        fns.append(lambda g, key=key: index(g, key))
    return _node(data, "concat-channels", tensors, fns)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis % (t.ndim + 1), 1)
        expanded.append(reshape(t, shape))
    return concat(expanded, axis)


def index(a: Tensor, key) -> Tensor:
    data = a.data[key]
    return _node(np.asarray(data), "index", (a,), (lambda g: scatter(g, key, a.shape),))


def scatter(g: Tensor, key, shape) -> Tensor:
    """Adjoint of ``index``: place ``g`` at ``key`` inside zeros of ``shape``."""
    data = np.zeros(shape, dtype=g.dtype)
    if _is_advanced(key):
        np.add.at(data, key, g.data)
    else:
        data[key] = g.data
    return _node(data, "scatter", (g,), (lambda h: index(h, key),))


def _is_advanced(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def grad_fn(g):
        return mul(g, Tensor(mask.astype(g.dtype)))

    return _node(np.maximum(a.data, 0), "relu", (a,), (grad_fn,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 <= slope <= 1.0:
        raise ValueError("leaky_relu slope must lie in [0, 1]")
    mask = a.data > 0
    data = np.maximum(a.data, a.data * a.dtype.type(slope))

    def grad_fn(g):
        factor = mask.astype(g.dtype)
        factor *= g.dtype.type(1.0 - slope)
        factor += g.dtype.type(slope)
        return mul(g, Tensor(factor))

    return _node(data, "lrelu", (a,), (grad_fn,))


def tanh(a: Tensor) -> Tensor:
    out = _node(np.tanh(a.data), "tanh", (a,), ())
    if out.requires_grad:
        out._grad_fns = (lambda g: mul(g, sub(_const(1.0, out), mul(out, out))),)
    return out


def _patch_grid(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


def unfold(x: Tensor, kernel: tuple[int, int], stride: tuple[int, int]) -> Tensor:
    """Extract sliding patches of an NHWC tensor -> (N, Ho, Wo, kh, kw, C). No padding."""
    kh, kw = kernel
    sh, sw = stride
    n, h, w, c = x.shape
    if h < kh or w < kw:
        raise ShapeError("unfold", f"spatial >= {kernel}", (h, w))
    ho, wo = _patch_grid(h, kh, sh), _patch_grid(w, kw, sw)
    if (kh, kw) == (sh, sw):
        data = (
            x.data[:, : ho * kh, : wo * kw]
            .reshape(n, ho, kh, wo, kw, c)
            .transpose(0, 1, 3, 2, 4, 5)
        )
    else:
        data = np.empty((n, ho, wo, kh, kw, c), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                data[:, :, :, i, j, :] = x.data[
                    :, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw, :
                ]
    return _node(data, "unfold", (x,), (lambda g: fold(g, stride, (h, w)),))


def fold(p: Tensor, stride: tuple[int, int], out_hw: tuple[int, int] | None = None) -> Tensor:
    """Overlap-add patches (N, Ho, Wo, kh, kw, C) into an NHWC tensor. Adjoint of ``unfold``."""
    n, ho, wo, kh, kw, c = p.shape
    sh, sw = stride
    h_min, w_min = (ho - 1) * sh + kh, (wo - 1) * sw + kw
    h, w = out_hw if out_hw is not None else (h_min, w_min)
    if h < h_min or w < w_min or _patch_grid(h, kh, sh) != ho or _patch_grid(w, kw, sw) != wo:
        raise ShapeError("fold", f"output >= {(h_min, w_min)}", (h, w))
    if (kh, kw) == (sh, sw):
        data = np.zeros((n, h, w, c), dtype=p.dtype)
        data[:, :h_min, :w_min] = p.data.transpose(0, 1, 3, 2, 4, 5).reshape(n, h_min, w_min, c)
    else:
        data = np.zeros((n, h, w, c), dtype=p.dtype)
        for i in range(kh):
            for j in range(kw):
                data[:, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw, :] += (
                    p.data[:, :, :, i, j, :]
                )
    return _node(data, "fold", (p,), (lambda g: unfold(g, (kh, kw), stride),))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, a)
    b = as_tensor(b)
    return as_tensor(a, b), b


# ---------------------------------------------------------------------------
# Reverse pass
# ---------------------------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def grad(
    output: Tensor,
    inputs: Iterable[Tensor],
    create_graph: bool = False,
    grad_output: Tensor | None = None,
) -> list[Tensor]:
    """Gradients of a scalar ``output`` with respect to each tensor in ``inputs``.

    With ``create_graph=True`` the returned tensors are themselves part of a
    differentiable graph. Inputs that ``output`` does not depend on receive zeros.
    """
    inputs = list(inputs)
    if grad_output is None and output.size != 1:
        raise GraphError(f"gradient requires a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        raise GraphError("output was not produced by a recorded forward pass over tensors requiring grad")
    order = _toposort(output)
    targets = {id(t) for t in inputs}
    relevant: set[int] = set()
    for node in order:
        if id(node) in targets or any(id(p) in relevant for p in node._parents):
            relevant.add(id(node))

    seed = grad_output if grad_output is not None else Tensor(np.ones_like(output.data))
    pending: dict[int, Tensor] = {id(output): seed}
    found: dict[int, Tensor] = {}
    context = enable_grad() if create_graph else no_grad()
    with context:
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if id(node) in targets:
                found[id(node)] = g
            for parent, fn in zip(node._parents, node._grad_fns):
                if id(parent) not in relevant:
                    continue
                contribution = fn(g)
                prior = pending.get(id(parent))
                pending[id(parent)] = contribution if prior is None else add(prior, contribution)
    return [found.get(id(t), Tensor(np.zeros_like(t.data))) for t in inputs]
