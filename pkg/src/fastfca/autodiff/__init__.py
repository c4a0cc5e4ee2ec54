"""Minimal tape-based reverse-mode autodiff used to train the neural models."""
from .checkpoint import load_arrays, save_arrays
from .complex import CTensor, ceinsum, logdet_qqh, real_embedding
from .gradcheck import grad_check, numeric_grad
from .optim import Adam, AdamState, adam_step
from .tensor import (
    EPS,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    conv1d,
    div,
    einsum,
    exp,
    gradients,
    log,
    logabsdet,
    matmul,
    mean,
    mul,
    no_grad,
    power,
    prelu,
    reciprocal,
    reshape,
    sigmoid,
    sign,
    softplus,
    sqrt,
    stack,
    sub,
    topological_order,
    transpose,
    tsum,
)

__all__ = [
    "EPS", "Tensor", "CTensor", "Adam", "AdamState", "adam_step", "add", "as_tensor",
    "backward", "ceinsum", "concat", "conv1d", "div", "einsum", "exp", "grad_check",
    "gradients", "load_arrays", "log", "logabsdet", "logdet_qqh", "matmul", "mean", "mul",
    "no_grad", "numeric_grad", "power", "prelu", "real_embedding", "reciprocal", "reshape",
    "save_arrays", "sigmoid", "sign", "softplus", "sqrt", "stack", "sub",
    "topological_order", "transpose", "tsum",
]
