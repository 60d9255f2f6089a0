"""Chamfer and modified (k-neighbour) Chamfer distances with gradients.

Distances are unsquared Euclidean.  The modified distance averages each point's
``k`` nearest distances into the other cloud instead of taking only the
minimum; ``k`` clamps separately per direction to the size of the searched cloud.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spatial import _as_points, nearest


@dataclass(frozen=True)
class MetricReport:
    value: float
    term_in_to_out: float
    term_out_to_in: float
    k: int


def _check(s_in, s_out, k: int) -> tuple[np.ndarray, np.ndarray]:
    a = _as_points(s_in)
    b = _as_points(s_out)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("both clouds must be non-empty")
    if k <= 0:
        raise ValueError("k must be >= 1")
    return a, b


def _directional(src: np.ndarray, dst: np.ndarray, k: int):
    """Mean over ``src`` of the mean distance to its k nearest points in ``dst``."""
    idx, dist = nearest(dst, src, k)
    per_point = dist.mean(axis=1)
    return float(per_point.mean()), idx, dist


def modified_chamfer(s_in, s_out, k: int) -> MetricReport:
    a, b = _check(s_in, s_out, k)
    fwd, _, _ = _directional(a, b, k)
    rev, _, _ = _directional(b, a, k)
    return MetricReport(fwd + rev, fwd, rev, k)


def chamfer(s_in, s_out) -> MetricReport:
    return modified_chamfer(s_in, s_out, 1)


def _unit(diff: np.ndarray, dist: np.ndarray) -> np.ndarray:
    # coincident pairs contribute a zero vector
    safe = np.where(dist > 0, dist, 1.0)
    return np.where((dist > 0)[..., None], diff / safe[..., None], 0.0)


def value_and_grad(s_in, s_out, k: int) -> tuple[MetricReport, np.ndarray]:
    """Modified Chamfer value and its gradient w.r.t. the ``s_out`` coordinates.

    Neighbour assignments are held fixed, so the gradient is that of the
    piecewise-smooth branch active at ``s_out``.
    """
    a, b = _check(s_in, s_out, k)
    n_in, n_out = a.shape[0], b.shape[0]
    grad = np.zeros_like(b)

    fwd, idx_f, dist_f = _directional(a, b, k)
    kf = idx_f.shape[1]
    # d/dq ||q - p|| for every (p, q_i) pair
    unit_f = _unit(b[idx_f] - a[:, None, :], dist_f)
    contrib = unit_f.reshape(-1, 3) / (n_in * kf)
    flat = idx_f.ravel()
    for axis in range(3):
        grad[:, axis] += np.bincount(flat, weights=contrib[:, axis], minlength=n_out)

    rev, idx_r, dist_r = _directional(b, a, k)
    kr = idx_r.shape[1]
    unit_r = _unit(b[:, None, :] - a[idx_r], dist_r)
    grad += unit_r.sum(axis=1) / (n_out * kr)

    return MetricReport(fwd + rev, fwd, rev, k), grad


def grad_wrt_out(s_in, s_out, k: int) -> np.ndarray:
    return value_and_grad(s_in, s_out, k)[1]
