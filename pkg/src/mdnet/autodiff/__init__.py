"""Reverse-mode differentiation over dense float64 tensors."""

from .gradcheck import grad_check
from .ops import (
    BnState,
    PRIMITIVE_KINDS,
    add,
    avg_pool2,
    batch_norm,
    bmm,
    concat,
    concat_channels,
    conv2d,
    embed_lookup,
    global_avg_pool,
    linear,
    log,
    matmul,
    mul,
    nll_loss,
    relu,
    reshape,
    scale,
    sigmoid,
    slice_axis,
    softmax,
    tanh,
    tensor_op,
    tmean,
    transpose,
    tsum,
)
from .tensor import (
    Parameter,
    Tensor,
    backward,
    grad_enabled,
    no_grad,
    sgd_step,
    zero_grads,
)

__all__ = [
    "BnState",
    "PRIMITIVE_KINDS",
    "Parameter",
    "Tensor",
    "add",
    "avg_pool2",
    "backward",
    "batch_norm",
    "bmm",
    "concat",
    "concat_channels",
    "conv2d",
    "embed_lookup",
    "global_avg_pool",
    "grad_check",
    "grad_enabled",
    "linear",
    "log",
    "matmul",
    "mul",
    "nll_loss",
    "no_grad",
    "relu",
    "reshape",
    "scale",
    "sgd_step",
    "sigmoid",
    "slice_axis",
    "softmax",
    "tanh",
    "tensor_op",
    "tmean",
    "transpose",
    "tsum",
    "zero_grads",
]
