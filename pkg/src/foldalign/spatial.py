"""Exact k-nearest-neighbour search.

``KdIndex`` is a balanced kd-tree with axis-median splits whose leaves are small
buckets.  Queries are answered for many points at once: each query visits the
leaves in order of increasing box distance and stops once the next box is
farther than its current k-th best candidate.  Results are exact and ties are
broken by the lower original point index, so they agree with
:func:`brute_force_knn` element for element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud

_NO_INDEX = np.iinfo(np.int64).max


def _as_points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    pts = np.asarray(cloud, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got shape {pts.shape}")
    return pts


def euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unsquared distances along the last axis, summed in a fixed x, y, z order."""
    d = a - b
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2])


@dataclass(frozen=True, eq=False)
class _Node:
    start: int
    end: int
    split_dim: int = -1
    split_value: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class KdIndex:
    """Immutable kd-tree over an ``(n, 3)`` point array."""

    def __init__(self, cloud, leaf_size: int = 16):
        pts = _as_points(cloud)
        if pts.shape[0] == 0:
            raise ValueError("cannot index an empty cloud")
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        self.points = np.array(pts, dtype=np.float64)
        self.points.setflags(write=False)
        self.leaf_size = leaf_size
        n = self.points.shape[0]
        order = np.arange(n, dtype=np.int64)
        self._leaves: list[tuple[int, int]] = []
        self.root = self._build(order, 0, n)
        self.order = order
        self.order.setflags(write=False)
        self.depth = self._depth(self.root)

        L = len(self._leaves)
        width = max(e - s for s, e in self._leaves)
        members = np.full((L, width), -1, dtype=np.int64)
        lo = np.empty((L, 3))
        hi = np.empty((L, 3))
        for j, (s, e) in enumerate(self._leaves):
            idx = order[s:e]
            members[j, : e - s] = idx
            lo[j] = self.points[idx].min(axis=0)
            hi[j] = self.points[idx].max(axis=0)
        self._members = members
        self._lo = lo
        self._hi = hi

    def __len__(self) -> int:
        return self.points.shape[0]

    def _build(self, order: np.ndarray, start: int, end: int) -> _Node:
        if end - start <= self.leaf_size:
            self._leaves.append((start, end))
            return _Node(start, end)
        idx = order[start:end]
        sub = self.points[idx]
        dim = int(np.argmax(sub.max(axis=0) - sub.min(axis=0)))
        # equal coordinates keep ascending original index
        perm = np.lexsort((idx, sub[:, dim]))
        order[start:end] = idx[perm]
        mid = start + (end - start) // 2
        split_value = float(self.points[order[mid], dim])
        left = self._build(order, start, mid)
        right = self._build(order, mid, end)
        return _Node(start, end, dim, split_value, left, right)

    def _depth(self, node: _Node) -> int:
        if node.is_leaf:
            return 0
        return 1 + max(self._depth(node.left), self._depth(node.right))

    def leaves(self):
        """Yield the original point indices held by each leaf."""
        for s, e in self._leaves:
            yield self.order[s:e]

    def query(self, queries, k: int, chunk: int = 1024) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(indices, distances)`` of shape ``(q, min(k, n))``, nearest first."""
        if k <= 0:
            raise ValueError("k must be >= 1")
        q = _as_points(queries)
        k = min(k, len(self))
        idx_out = np.empty((q.shape[0], k), dtype=np.int64)
        dist_out = np.empty((q.shape[0], k))
        for s in range(0, q.shape[0], chunk):
            i, d = self._query_chunk(q[s : s + chunk], k)
            idx_out[s : s + chunk] = i
            dist_out[s : s + chunk] = d
        return idx_out, dist_out

    def _query_chunk(self, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        nq = q.shape[0]
        gap = np.maximum(self._lo[None] - q[:, None], 0.0) + np.maximum(q[:, None] - self._hi[None], 0.0)
        # same summation order as euclidean(), so box <= true distance holds after rounding
        box = np.sqrt(gap[..., 0] * gap[..., 0] + gap[..., 1] * gap[..., 1] + gap[..., 2] * gap[..., 2])
        visit = np.argsort(box, axis=1, kind="stable")
        rows = np.arange(nq)
        best_d = np.full((nq, k), np.inf)
        best_i = np.full((nq, k), _NO_INDEX, dtype=np.int64)

        n_leaves = visit.shape[1]
        step = max(1, -(-2 * k // self.leaf_size))
        r = 0
        while r < n_leaves:
            leaf = visit[:, r : r + step]
            # <= keeps equal-distance leaves, which may hold lower-index ties
            active = np.nonzero(box[rows, leaf[:, 0]] <= best_d[:, -1])[0]
            if active.size == 0:
                break
            cand = self._members[leaf[active]].reshape(active.size, -1)
            valid = cand >= 0
            d = euclidean(self.points[np.where(valid, cand, 0)], q[active][:, None, :])
            d = np.where(valid, d, np.inf)
            cand = np.where(valid, cand, _NO_INDEX)
            all_d = np.concatenate([best_d[active], d], axis=1)
            all_i = np.concatenate([best_i[active], cand], axis=1)
            sel = _select(all_d, all_i, k)
            best_d[active] = np.take_along_axis(all_d, sel, axis=1)
            best_i[active] = np.take_along_axis(all_i, sel, axis=1)
            r += step
            step = 2
        return best_i, best_d


def _select(dist: np.ndarray, idx: np.ndarray, k: int) -> np.ndarray:
    """Column positions of the k smallest (distance, index) pairs per row."""
    order = np.argsort(dist, axis=1, kind="stable")
    sd = np.take_along_axis(dist, order, axis=1)
    tied = np.any((sd[:, 1:] == sd[:, :-1]) & np.isfinite(sd[:, 1:]), axis=1)
    if tied.any():
        order[tied] = np.lexsort((idx[tied], dist[tied]), axis=-1)
    return order[:, :k]


def build_index(cloud, leaf_size: int = 16) -> KdIndex:
    return KdIndex(cloud, leaf_size=leaf_size)


def knn(index: KdIndex, query, k: int) -> list[tuple[int, float]]:
    """The ``k`` nearest indexed points to a single query, as ``(index, distance)`` pairs."""
    idx, dist = index.query(np.asarray(query, dtype=np.float64).reshape(1, 3), k)
    return [(int(i), float(d)) for i, d in zip(idx[0], dist[0])]


def knn_graph(cloud, k: int, index: KdIndex | None = None) -> np.ndarray:
    """Row ``i`` lists the ``min(k, n-1)`` nearest other points of point ``i``."""
    pts = _as_points(cloud)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("knn_graph needs at least 2 points")
    if k <= 0:
        raise ValueError("k must be >= 1")
    k = min(k, n - 1)
    index = index if index is not None else KdIndex(pts)
    idx, _ = index.query(pts, k + 1)
    is_self = idx == np.arange(n)[:, None]
    # drop self if present, otherwise the farthest of the k+1
    drop = np.where(is_self.any(axis=1), is_self.argmax(axis=1), k)
    keep = np.ones_like(idx, dtype=bool)
    keep[np.arange(n), drop] = False
    return idx[keep].reshape(n, k)


def nearest(source, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k nearest points of ``source`` for each query point (k clamped to ``len(source)``)."""
    return KdIndex(source).query(queries, k)


def brute_force_knn(source, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Reference semantics: full distance matrix, stable sort on (distance, index)."""
    src = _as_points(source)
    q = _as_points(queries)
    if k <= 0:
        raise ValueError("k must be >= 1")
    k = min(k, src.shape[0])
    d = euclidean(src[None, :, :], q[:, None, :])
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(d, order, axis=1)
