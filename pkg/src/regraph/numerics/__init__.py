"""Reverse-mode autodiff on dense float64 arrays, plus the optimizer."""

from regraph.numerics.optim import RmsProp
from regraph.numerics.tensor import (
    ComputationTape,
    DiffTensor,
    add,
    backward,
    clear_tape,
    concat,
    constant,
    matmul,
    mean_all,
    mul,
    no_grad,
    parameter,
    relu,
    reshape,
    sigmoid,
    softmax,
    sub,
    sum_all,
    tanh,
    tape_length,
    zero_grads,
)

__all__ = [
    "ComputationTape",
    "DiffTensor",
    "RmsProp",
    "add",
    "backward",
    "clear_tape",
    "concat",
    "constant",
    "matmul",
    "mean_all",
    "mul",
    "no_grad",
    "parameter",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "sub",
    "sum_all",
    "tanh",
    "tape_length",
    "zero_grads",
]
