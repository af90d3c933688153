"""Numeric core: tensors with reverse-mode autodiff, Adam, gradient checks."""

from . import _backend
from .attention import scaled_dot_attention
from .core import (
    Tensor,
    add,
    concat,
    cross_entropy,
    div,
    dropout,
    embedding,
    exp,
    gelu,
    get_default_dtype,
    getitem,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    precision,
    relu,
    reshape,
    set_default_dtype,
    softmax,
    stack,
    sub,
    sum_,
    tanh,
    tensor,
    transpose,
    unbroadcast,
    where,
)
from .gradcheck import GradCheckResult, gradcheck, relative_error
from .optim import Adam, OptimizerState, linear_schedule


def kernel_backend() -> str:
    return _backend.BACKEND
