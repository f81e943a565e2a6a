"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autograd import Tensor, grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| / max(max |a|, max |n|), zero when both vanish."""
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0))
    if scale < floor:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def numeric_gradient(fn: Callable[[], Tensor], tensor: Tensor, eps: float = 1e-6) -> np.ndarray:
    out = np.zeros_like(tensor.data, dtype=np.float64)
    flat = tensor.data.reshape(-1)
    target = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = float(np.sum(fn().data))
        flat[i] = orig - eps
        minus = float(np.sum(fn().data))
        flat[i] = orig
        target[i] = (plus - minus) / (2 * eps)
    return out


def gradient_check(
    fn: Callable[[], Tensor], tensors: dict[str, Tensor], eps: float = 1e-6
) -> dict[str, float]:
    """Per-tensor relative error between analytic and central-difference gradients.

    ``fn`` rebuilds the scalar loss from the current tensor values; tensors should
    hold float64 data so the differences are meaningful.
    """
    loss = fn()
    analytic = grad(loss, list(tensors.values()))
    report = {}
    for (name, t), a in zip(tensors.items(), analytic):
        report[name] = relative_error(a.data, numeric_gradient(fn, t, eps))
    return report
