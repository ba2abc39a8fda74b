"""Numerical substrate: tensors, reverse-mode differentiation, layers, Adam."""

from .autograd import (
    Tensor,
    add,
    backward,
    concat,
    dot,
    gather,
    log_sigmoid,
    matmul,
    matvec,
    mul,
    narrow,
    neg,
    reshape,
    set_debug_checks,
    sigmoid,
    softmax,
    stack_rows,
    sub,
    take_row,
    tanh,
    tensor_mean,
    tensor_sum,
    transpose,
)
from .nn import (
    BatchNormState,
    LstmParams,
    batchnorm2d,
    conv2d,
    linear,
    lstm_cell,
    maxpool2d,
    xavier_uniform,
)
from .optim import Adam, AdamState, adam_step, adam_step_rows
from .serialize import pack_arrays, unpack_arrays

__all__ = [
    "Tensor", "add", "backward", "concat", "dot", "gather", "log_sigmoid",
    "matmul", "matvec", "mul", "narrow", "neg", "reshape", "set_debug_checks",
    "sigmoid", "softmax", "stack_rows", "sub", "take_row", "tanh",
    "tensor_mean", "tensor_sum", "transpose",
    "BatchNormState", "LstmParams", "batchnorm2d", "conv2d", "linear",
    "lstm_cell", "maxpool2d", "xavier_uniform",
    "Adam", "AdamState", "adam_step", "adam_step_rows",
    "pack_arrays", "unpack_arrays",
]
