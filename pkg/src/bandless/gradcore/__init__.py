"""Minimal reverse-mode tensor engine used by the reconstruction stack."""

from .tensor import (
    DomainError,
    GradcoreError,
    NumericError,
    Tensor,
    as_tensor,
    backward,
    enable_grad,
    no_grad,
    precision,
    set_checked,
    set_default_dtype,
    stop_gradient,
)
from .ops import (
    abs_,
    add,
    avgpool2d,
    concat,
    conj,
    conv2d,
    div,
    exp,
    expand,
    fft2,
    fftshift2,
    flip2d,
    group_norm,
    ifft2,
    ifftshift2,
    imag,
    leaky_relu,
    log,
    maxpool2d,
    mean_all,
    mean_axes,
    mul,
    narrow,
    neg,
    pad_axis,
    pow_const,
    real,
    relu,
    reshape,
    sigmoid,
    softplus,
    sqrt,
    square,
    sub,
    sum_all,
    sum_axes,
    swap_last2,
    to_complex,
    transpose,
)

__all__ = [
    "Tensor", "as_tensor", "backward", "stop_gradient",
    "no_grad", "enable_grad", "precision", "set_checked", "set_default_dtype",
    "GradcoreError", "DomainError", "NumericError",
    "add", "sub", "neg", "mul", "div", "pow_const", "square", "sqrt",
    "exp", "log", "abs_", "relu", "leaky_relu", "sigmoid", "softplus",
    "sum_all", "sum_axes", "mean_all", "mean_axes",
    "reshape", "transpose", "swap_last2", "expand", "concat", "narrow",
    "pad_axis", "flip2d",
    "conv2d", "maxpool2d", "avgpool2d", "group_norm",
    "fft2", "ifft2", "fftshift2", "ifftshift2",
    "to_complex", "real", "imag", "conj",
]
