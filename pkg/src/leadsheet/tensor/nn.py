"""Layers built on the autograd primitives. Feature maps are NHWC."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .autograd import (
    ShapeError,
    Tensor,
    concat,
    fold,
    leaky_relu,
    matmul,
    mean,
    power,
    relu,
    reshape,
    stack,
    tanh,
    unfold,
)

LRELU_SLOPE = 0.2


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, stride: tuple[int, int]) -> Tensor:
    """Valid (unpadded) convolution. ``weight`` has shape (kh, kw, C_in, C_out)."""
    kh, kw, c_in, c_out = weight.shape
    if x.ndim != 4 or x.shape[3] != c_in:
        raise ShapeError("conv2d", f"(N, H, W, {c_in})", x.shape)
    patches = unfold(x, (kh, kw), stride)
    n, ho, wo = patches.shape[:3]
    y = matmul(reshape(patches, (n * ho * wo, kh * kw * c_in)), reshape(weight, (kh * kw * c_in, c_out)))
    y = reshape(y, (n, ho, wo, c_out))
    if bias is not None:
        y = y + bias
    y.op = "conv2d"
    return y


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None, stride: tuple[int, int]) -> Tensor:
    """Transposed convolution with output size (in - 1) * stride + kernel.

    ``weight`` has shape (C_in, kh, kw, C_out).
    """
    c_in, kh, kw, c_out = weight.shape
    if x.ndim != 4 or x.shape[3] != c_in:
        raise ShapeError("transconv2d", f"(N, H, W, {c_in})", x.shape)
    n, h, w, _ = x.shape
    cols = matmul(reshape(x, (n * h * w, c_in)), reshape(weight, (c_in, kh * kw * c_out)))
    y = fold(reshape(cols, (n, h, w, kh, kw, c_out)), stride)
    if bias is not None:
        y = y + bias
    y.op = "transconv2d"
    return y


class Module:
    """Container with named parameters, buffers and submodules.

    Attributes holding a ``Tensor`` with ``requires_grad`` are parameters,
    ``np.ndarray`` attributes listed in ``_buffers`` are persistent state,
    and ``Module`` attributes (or lists of them) are children.
    """

    training = True
    _buffers: tuple[str, ...] = ()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield key, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{key}.{i}", v

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        params = {}
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                params[prefix + key] = value
        for key, child in self.children():
            params.update(child.named_parameters(f"{prefix}{key}."))
        return params

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + name: getattr(self, name) for name in self._buffers}
        for key, child in self.children():
            out.update(child.named_buffers(f"{prefix}{key}."))
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters().items()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        buffers = self.named_buffers()
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"missing entries in state: {sorted(missing)[:5]}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ShapeError(name, p.shape, value.shape)
            p.data = value.astype(p.dtype, copy=True)
        for name in buffers:
            self._set_buffer(name, np.array(state[name], dtype=buffers[name].dtype))

    def _set_buffer(self, dotted: str, value: np.ndarray) -> None:
        parts = dotted.split(".")
        target, i = self, 0
        while i < len(parts) - 1:
            kids = dict(target.children())
            for j in range(len(parts) - 1, i, -1):
                key = ".".join(parts[i:j])
                if key in kids:
                    target, i = kids[key], j
                    break
            else:
                raise KeyError(dotted)
        setattr(target, parts[-1], value)

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        for name, buf in self.named_buffers().items():
            self._set_buffer(name, buf.astype(dtype))
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _param(shape, rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape).astype(dtype), requires_grad=True)


def _zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


class Dense(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, dtype=np.float32):
        self.in_features, self.out_features = in_features, out_features
        self.weight = _param((in_features, out_features), rng, in_features, out_features, dtype)
        self.bias = _zeros((out_features,), dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError("dense", f"(N, {self.in_features})", x.shape)
        return matmul(x, self.weight) + self.bias


class Conv2D(Module):
    def __init__(self, in_channels, out_channels, kernel, stride, rng, dtype=np.float32):
        self.kernel, self.stride = tuple(kernel), tuple(stride)
        kh, kw = self.kernel
        self.weight = _param(
            (kh, kw, in_channels, out_channels), rng, kh * kw * in_channels, kh * kw * out_channels, dtype
        )
        self.bias = _zeros((out_channels,), dtype)

    @property
    def out_channels(self) -> int:
        return self.weight.shape[3]

    def output_shape(self, shape: tuple[int, int, int]) -> tuple[int, int, int]:
        h, w, _ = shape
        (kh, kw), (sh, sw) = self.kernel, self.stride
        return ((h - kh) // sh + 1, (w - kw) // sw + 1, self.out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride)


class ConvTranspose2D(Module):
    def __init__(self, in_channels, out_channels, kernel, stride, rng, dtype=np.float32):
        self.kernel, self.stride = tuple(kernel), tuple(stride)
        kh, kw = self.kernel
        sh, sw = self.stride
        fan_in = in_channels * max(1, (kh * kw) // (sh * sw))
        self.weight = _param((in_channels, kh, kw, out_channels), rng, fan_in, kh * kw * out_channels, dtype)
        self.bias = _zeros((out_channels,), dtype)

    @property
    def out_channels(self) -> int:
        return self.weight.shape[3]

    def output_shape(self, shape: tuple[int, int, int]) -> tuple[int, int, int]:
        h, w, _ = shape
        (kh, kw), (sh, sw) = self.kernel, self.stride
        return ((h - 1) * sh + kh, (w - 1) * sw + kw, self.out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return conv_transpose2d(x, self.weight, self.bias, self.stride)


class BatchNorm(Module):
    """Normalises over every axis but the last.

    Training mode uses batch statistics and keeps bias-corrected exponential
    averages of them for inference: after ``k`` updates the running value is
    the momentum-weighted mean of the ``k`` batch statistics. A layer that has
    never seen a training batch normalises with the batch's own statistics.
    """

    _buffers = ("running_mean", "running_var", "updates")

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5, dtype=np.float32):
        self.momentum, self.eps = momentum, eps
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = _zeros((channels,), dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.updates = np.zeros(1, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.gamma.shape[0]:
            raise ShapeError("batchnorm", f"(..., {self.gamma.shape[0]})", x.shape)
        axes = tuple(range(x.ndim - 1))
        if self.training or self.updates[0] == 0:
            mu = mean(x, axes, keepdims=True)
            centered = x - mu
            var = mean(centered * centered, axes, keepdims=True)
            if self.training:
                self._update(mu.data.reshape(-1), var.data.reshape(-1))
        else:
            centered = x - Tensor(self.running_mean.astype(x.dtype))
            var = Tensor(self.running_var.astype(x.dtype))
        y = centered * power(var + self.eps, -0.5) * self.gamma + self.beta
        y.op = "batchnorm"
        return y

    def _update(self, mu: np.ndarray, var: np.ndarray) -> None:
        m = self.momentum
        k = float(self.updates[0]) + 1
        w = (1 - m) / (1 - m**k)
        dtype = self.running_mean.dtype
        self.running_mean = ((1 - w) * self.running_mean + w * mu).astype(dtype)
        self.running_var = ((1 - w) * self.running_var + w * var).astype(dtype)
        self.updates = np.array([k], dtype=self.updates.dtype)


def activate(x: Tensor, kind: str | None) -> Tensor:
    if kind is None:
        return x
    if kind == "relu":
        return relu(x)
    if kind == "lrelu":
        return leaky_relu(x, LRELU_SLOPE)
    if kind == "tanh":
        return tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


class RNN(Module):
    """Stacked plain tanh recurrent layers with a tanh output projection.

    h_t = tanh(x_t W_x + h_{t-1} W_h + b); hidden states start at zero.
    """

    def __init__(self, input_size, hidden_size, output_size, n_layers, rng, dtype=np.float32):
        self.hidden_size = hidden_size
        self.input_weights = []
        self.hidden_weights = []
        self.biases = []
        sizes = [input_size] + [hidden_size] * n_layers
        for i in range(n_layers):
            self.input_weights.append(_param((sizes[i], hidden_size), rng, sizes[i], hidden_size, dtype))
            self.hidden_weights.append(_param((hidden_size, hidden_size), rng, hidden_size, hidden_size, dtype))
            self.biases.append(_zeros((hidden_size,), dtype))
        self.projection = Dense(hidden_size, output_size, rng, dtype)

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        params = {}
        for i, (wx, wh, b) in enumerate(zip(self.input_weights, self.hidden_weights, self.biases)):
            params[f"{prefix}layer{i}.input_weight"] = wx
            params[f"{prefix}layer{i}.hidden_weight"] = wh
            params[f"{prefix}layer{i}.bias"] = b
        params.update(self.projection.named_parameters(prefix + "projection."))
        return params

    def cell(self, layer: int, x: Tensor, h: Tensor) -> Tensor:
        out = tanh(matmul(x, self.input_weights[layer]) + matmul(h, self.hidden_weights[layer]) + self.biases[layer])
        out.op = "recurrent-cell"
        return out

    def forward(self, inputs: Tensor | list[Tensor], n_steps: int | None = None) -> Tensor:
        """Run over a sequence. ``inputs`` is (N, F) repeated ``n_steps`` times, or a list of (N, F)."""
        if isinstance(inputs, Tensor):
            steps = [inputs] * n_steps
        else:
            steps = list(inputs)
        n = steps[0].shape[0]
        dtype = steps[0].dtype
        hidden = [Tensor(np.zeros((n, self.hidden_size), dtype=dtype)) for _ in self.input_weights]
        outputs = []
        for x in steps:
            for layer in range(len(hidden)):
                hidden[layer] = self.cell(layer, x, hidden[layer])
                x = hidden[layer]
            outputs.append(tanh(self.projection(x)))
        return stack(outputs, axis=1)


def replicate_channels(x: Tensor, channels: int) -> Tensor:
    """(N, H, W) or (N, H, W, 1) -> (N, H, W, channels) by copying."""
    if x.ndim == 3:
        x = reshape(x, x.shape + (1,))
    return concat([x] * channels, axis=-1)
