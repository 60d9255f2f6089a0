"""Minimal reverse-mode autodiff over dense float64 arrays, plus Adam."""

from .ops import (
    add,
    add_broadcast,
    concat_lastdim,
    global_max_pool,
    linear,
    matmul,
    mcd_loss,
    mse,
    reduce_max_rows,
    relu,
    scale,
    sum_all,
)
from .params import (
    AdamConfig,
    ParamStore,
    adam_step,
    add_linear,
    kaiming_uniform,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import NonFiniteError, Tensor, backward, topological_order

__all__ = [
    "AdamConfig",
    "NonFiniteError",
    "ParamStore",
    "Tensor",
    "adam_step",
    "add",
    "add_broadcast",
    "add_linear",
    "backward",
    "concat_lastdim",
    "global_max_pool",
    "kaiming_uniform",
    "linear",
    "load_checkpoint",
    "matmul",
    "mcd_loss",
    "mse",
    "reduce_max_rows",
    "relu",
    "save_checkpoint",
    "scale",
    "sum_all",
    "topological_order",
]
