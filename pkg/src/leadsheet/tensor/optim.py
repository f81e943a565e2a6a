"""Adam optimiser with explicit, serialisable state."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import ShapeError, Tensor


@dataclass
class OptimizerState:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    eps: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: OptimizerState) -> None:
    """Update ``params`` in place from ``grads`` and advance ``state``.

    Parameters without an entry in ``grads`` are treated as having zero gradient.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ShapeError(f"adam[{name}]", p.shape, g.shape)
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.first_moment[name] = m.astype(p.dtype)
        state.second_moment[name] = v.astype(p.dtype)
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p.data = (p.data - update).astype(p.dtype)


class Adam:
    def __init__(self, params: dict[str, Tensor], lr=1e-4, beta1=0.5, beta2=0.9, eps=1e-8):
        self.params = params
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        if grads is None:
            grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        adam_step(self.params, grads, self.state)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for name in self.params:
            if name in self.state.first_moment:
                out[f"{prefix}m/{name}"] = self.state.first_moment[name]
                out[f"{prefix}v/{name}"] = self.state.second_moment[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str, step: int) -> None:
        self.state.step = step
        self.state.first_moment.clear()
        self.state.second_moment.clear()
        for name, p in self.params.items():
            key = f"{prefix}m/{name}"
            if key in arrays:
                self.state.first_moment[name] = arrays[key].astype(p.dtype)
                self.state.second_moment[name] = arrays[f"{prefix}v/{name}"].astype(p.dtype)
