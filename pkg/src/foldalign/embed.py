"""Two-dimensional embeddings of codeword sets: PCA and exact t-SNE."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .foldnet import Codeword


@dataclass(frozen=True)
class EmbeddingResult:
    coords: np.ndarray
    frame_indices: np.ndarray
    method: str
    perplexity: float | None = None
    iterations: int | None = None
    kl_divergence: float | None = None
    kl_after_exaggeration: float | None = None
    explained_variance_ratio: float | None = None
    row_entropies: np.ndarray | None = field(default=None, repr=False)


def _matrix(codes) -> tuple[np.ndarray, np.ndarray]:
    if codes and isinstance(codes[0], Codeword):
        X = np.stack([c.values for c in codes])
        frames = np.array([c.frame_index if c.frame_index is not None else i + 1 for i, c in enumerate(codes)])
    else:
        X = np.asarray(codes, dtype=np.float64)
        frames = np.arange(1, X.shape[0] + 1)
    return X, frames


def pca_components(X: np.ndarray, n_components: int = 2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(mean, directions (d, c), eigenvalues (all, descending))`` with sign-fixed directions."""
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    dirs = evecs[:, order[:n_components]]
    # largest-magnitude loading of each axis made positive
    pivot = np.argmax(np.abs(dirs), axis=0)
    dirs = dirs * np.sign(dirs[pivot, np.arange(dirs.shape[1])])
    return mean, dirs, evals


def pca_embed(codes: Sequence[Codeword]) -> EmbeddingResult:
    X, frames = _matrix(codes)
    if X.shape[0] < 3:
        raise ValueError("PCA embedding needs at least 3 codewords")
    mean, dirs, evals = pca_components(X, 2)
    if evals[0] <= 0:
        raise ValueError("codewords have zero variance")
    coords = (X - mean) @ dirs
    total = float(np.clip(evals, 0, None).sum())
    ratio = float(np.clip(evals[:2], 0, None).sum() / total)
    return EmbeddingResult(coords, frames, "PCA", explained_variance_ratio=ratio)


def _sq_distances(X: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def _row_affinity(d: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Conditional probabilities for one row and their entropy in bits."""
    shifted = d - d.min()
    p = np.exp(-shifted * beta)
    s = p.sum()
    p /= s
    nz = p > 0
    h = -float(np.sum(p[nz] * np.log2(p[nz])))
    return p, h


def conditional_affinities(X: np.ndarray, perplexity: float, tol: float = 1e-5,
                           max_steps: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalised Gaussian affinities with bandwidths bisected to the target perplexity.

    Returns ``(P, entropies)``; each row sums to 1 and has entropy close to
    ``log2(perplexity)`` bits.
    """
    n = X.shape[0]
    D = _sq_distances(X)
    target = math.log2(perplexity)
    P = np.zeros((n, n))
    H = np.zeros(n)
    for i in range(n):
        d = np.delete(D[i], i)
        scale = np.median(d[d > 0]) if np.any(d > 0) else 1.0
        beta, lo, hi = 1.0 / scale, 0.0, math.inf
        p, h = _row_affinity(d, beta)
        for _ in range(max_steps):
            diff = h - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == math.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
            p, h = _row_affinity(d, beta)
        P[i, np.arange(n) != i] = p
        H[i] = h
    return P, H


def _kl(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))))


def tsne_embed(
    codes: Sequence[Codeword],
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = 200.0,
    exaggeration: float = 12.0,
    exaggeration_iters: int = 250,
    momentum_switch: int = 250,
) -> EmbeddingResult:
    """Exact t-SNE with early exaggeration, momentum 0.5 -> 0.8 and adaptive gains."""
    X, frames = _matrix(codes)
    n = X.shape[0]
    if n < 3:
        raise ValueError("t-SNE needs at least 3 codewords")
    if not 1 <= perplexity < n:
        raise ValueError(f"perplexity must lie in [1, {n}), got {perplexity}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    P_cond, entropies = conditional_affinities(X, perplexity)
    P = (P_cond + P_cond.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)
    P /= P.sum()

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-2, size=(n, 2))
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_after = None
    Q = None

    for it in range(iterations):
        exag = exaggeration if it < exaggeration_iters else 1.0
        momentum = 0.5 if it < momentum_switch else 0.8
        num = 1.0 / (1.0 + _sq_distances(Y))
        np.fill_diagonal(num, 0.0)
        Q = num / num.sum()
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same = np.sign(grad) == np.sign(velocity)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        velocity = momentum * velocity - learning_rate * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
        if it + 1 == exaggeration_iters:
            kl_after = _kl(P, _q_matrix(Y))

    kl = _kl(P, _q_matrix(Y))
    return EmbeddingResult(
        Y, frames, "TSNE", perplexity=perplexity, iterations=iterations,
        kl_divergence=kl, kl_after_exaggeration=kl_after, row_entropies=entropies,
    )


def _q_matrix(Y: np.ndarray) -> np.ndarray:
    num = 1.0 / (1.0 + _sq_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum()
