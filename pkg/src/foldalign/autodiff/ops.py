"""The operator set used by the autoencoder and the regression network.

Subgradient conventions: relu'(0) = 0; max reductions route the whole
gradient to the lowest-index row among tied maxima.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import metrics
from .tensor import Tensor


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(out, (a, b), bw, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a ``(1, d)`` or ``(d,)`` operand broadcasts over rows."""
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ValueError(f"add shape mismatch: {a.shape} + {b.shape}") from exc
    if out.shape != a.shape and out.shape != b.shape:
        raise ValueError(f"add would broadcast both operands: {a.shape} + {b.shape}")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(out, (a, b), bw, "add")


add_broadcast = add


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return add(matmul(x, weight), bias)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = x.data * mask
    return Tensor.from_op(out, (x,), lambda g: (g * mask,), "relu")


def scale(x: Tensor, factor: float) -> Tensor:
    return Tensor.from_op(x.data * factor, (x,), lambda g: (g * factor,), "scale")


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return Tensor.from_op(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def concat_lastdim(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis; ``(1, d)`` rows are repeated to the common row count."""
    rows = max(t.shape[0] for t in tensors)
    parts = []
    for t in tensors:
        if t.data.ndim != 2 or t.shape[0] not in (1, rows):
            raise ValueError(f"concat_lastdim cannot align shape {t.shape} to {rows} rows")
        parts.append(np.broadcast_to(t.data, (rows, t.shape[1])))
    out = np.concatenate(parts, axis=1)
    widths = np.cumsum([0] + [t.shape[1] for t in tensors])

    def bw(g):
        return [
            _unbroadcast(g[:, widths[i] : widths[i + 1]], t.shape) for i, t in enumerate(tensors)
        ]

    return Tensor.from_op(out, tensors, bw, "concat")


def reduce_max_rows(x: Tensor, groups: np.ndarray) -> Tensor:
    """Row ``i`` of the result is the elementwise max of ``x[groups[i]]``."""
    groups = np.asarray(groups, dtype=np.int64)
    if groups.ndim != 2 or x.data.ndim != 2:
        raise ValueError("reduce_max_rows needs a 2-D input and an (n, g) group table")
    if groups.size and (groups.min() < 0 or groups.max() >= x.shape[0]):
        raise ValueError("group index out of range")
    members = np.sort(groups, axis=1)
    gathered = x.data[members.T]  # (g, n, d)
    out = gathered.max(axis=0)
    n_in, d = x.shape

    def bw(g):
        # lowest group position holding the max; members are sorted, so lowest row index
        pos = np.zeros(out.shape, dtype=np.int64)
        for j in range(members.shape[1] - 1, -1, -1):
            np.copyto(pos, j, where=gathered[j] == out)
        src = np.take_along_axis(members, pos, axis=1)
        flat = (src * d + np.arange(d)[None, :]).ravel()
        gx = np.bincount(flat, weights=g.ravel(), minlength=n_in * d)
        return (gx.reshape(n_in, d),)

    return Tensor.from_op(out, (x,), bw, "reduce_max_rows")


def global_max_pool(x: Tensor) -> Tensor:
    """Columnwise max over rows, shape ``(1, d)``."""
    out = x.data.max(axis=0)[None, :]
    cols = np.arange(x.shape[1])

    def bw(g):
        # argmax of a boolean picks the first (lowest-index) tied row
        arg = (x.data == out).argmax(axis=0)
        gx = np.zeros_like(x.data)
        gx[arg, cols] = g[0]
        return (gx,)

    return Tensor.from_op(out, (x,), bw, "global_max_pool")


def mse(pred: Tensor, target) -> Tensor:
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {t.shape}")
    diff = pred.data - t
    n = diff.size

    def bw(g):
        return (g * 2.0 * diff / n,)

    return Tensor.from_op(np.array((diff * diff).mean()), (pred,), bw, "mse")


def mcd_loss(recon: Tensor, target_points, k: int) -> Tensor:
    """Modified Chamfer distance between ``recon`` (differentiable) and a fixed target cloud.

    ``k=1`` gives the plain Chamfer distance.
    """
    report, grad = metrics.value_and_grad(target_points, recon.data, k)
    return Tensor.from_op(np.array(report.value), (recon,), lambda g: (g * grad,), "mcd_loss")
