"""Tensor values, differentiable primitives, reverse-mode gradients, Adam."""

from .gradcheck import finite_diff_gradient, max_relative_error
from .optim import Adam, AdamState, adam_step
from .ops import (
    PRIMITIVES,
    add,
    as_tensor,
    concat,
    correlate1d,
    div,
    eval_primitive,
    gather_rows,
    gelu,
    layer_norm,
    linear,
    matmul,
    mean,
    mul,
    neg,
    pad_reflect,
    parameter,
    relu,
    reshape,
    sigmoid,
    softmax,
    split,
    sqrt,
    sub,
    sum_,
    transpose,
)
from .tensor import (
    NumericError,
    ShapeError,
    Tensor,
    backward,
    default_dtype,
    grad_enabled,
    no_grad,
    precision,
)

__all__ = [
    "Tensor",
    "ShapeError",
    "NumericError",
    "backward",
    "precision",
    "no_grad",
    "default_dtype",
    "grad_enabled",
    "as_tensor",
    "parameter",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "split",
    "softmax",
    "layer_norm",
    "gelu",
    "sigmoid",
    "relu",
    "sqrt",
    "mean",
    "sum_",
    "gather_rows",
    "pad_reflect",
    "correlate1d",
    "linear",
    "eval_primitive",
    "PRIMITIVES",
    "Adam",
    "AdamState",
    "adam_step",
    "finite_diff_gradient",
    "max_relative_error",
]
