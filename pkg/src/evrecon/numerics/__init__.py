from .tensor import (
    ShapeError, Tensor, abs_, add, as_tensor, backward, blend, no_grad, bilinear_matrix, broadcast_to,
    concat, conv2d, conv2d_blocked, conv2d_direct, div, downsample2, exp, forward_op,
    matmul, mean, mul, neg, relu, reshape, sigmoid, slice_, square, sub, sum_, tanh,
    tape, upsample2,
)
from .nn import Conv2d, ConvRelu, Linear, Module, named_rng, uniform_init
from .optim import AdamW, AdamWState, NonFiniteGradient, adamw_step
from . import checkpoint

__all__ = [
    "ShapeError", "Tensor", "abs_", "add", "as_tensor", "backward", "blend", "no_grad", "bilinear_matrix",
    "broadcast_to", "concat", "conv2d", "conv2d_blocked", "conv2d_direct", "div",
    "downsample2", "exp", "forward_op", "matmul", "mean", "mul", "neg", "relu",
    "reshape", "sigmoid", "slice_", "square", "sub", "sum_", "tanh", "tape", "upsample2",
    "Conv2d", "ConvRelu", "Linear", "Module", "named_rng", "uniform_init",
    "AdamW", "AdamWState", "NonFiniteGradient", "adamw_step", "checkpoint",
]
