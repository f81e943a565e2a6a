"""Minimal differentiable tensor engine."""

from .autograd import (
    GraphError,
    ShapeError,
    Tensor,
    add,
    broadcast_to,
    concat,
    enable_grad,
    fold,
    grad,
    index,
    leaky_relu,
    matmul,
    mean,
    mul,
    no_grad,
    power,
    reduce_sum,
    relu,
    reshape,
    sqrt,
    stack,
    sub,
    tanh,
    transpose,
    unfold,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import gradient_check, relative_error
from .nn import (
    RNN,
    BatchNorm,
    Conv2D,
    ConvTranspose2D,
    Dense,
    Module,
    activate,
    conv2d,
    conv_transpose2d,
)
from .optim import Adam, OptimizerState, adam_step
