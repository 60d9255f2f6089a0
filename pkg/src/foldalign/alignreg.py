"""Codeword-to-frame-index regression, alignment prediction and monotone postprocessing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .foldnet import Codeword

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegressionSpec:
    widths: tuple[int, ...] = (256, 128, 64, 32, 16, 8, 1)

    def __post_init__(self):
        w = tuple(self.widths)
        object.__setattr__(self, "widths", w)
        if len(w) < 2 or w[-1] != 1 or w[-2] != 8:
            raise ValueError("regression MLP must end with an 8 -> 1 layer")
        if any(w[i + 1] * 2 != w[i] for i in range(len(w) - 2)):
            raise ValueError("each hidden width must be half of its predecessor")


@dataclass(frozen=True)
class RegTrainConfig:
    epochs: int = 700
    learning_rate: float = 1e-5
    batch_size: int = 1
    rotation_degrees: float = 20.0
    augment: bool = False
    center_inputs: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class AlignmentSequence:
    raw: np.ndarray
    postprocessed: np.ndarray
    reference_T: int
    query_frames: np.ndarray = field(default=None)

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64)
        post = np.asarray(self.postprocessed, dtype=np.float64)
        if raw.shape != post.shape:
            raise ValueError("raw and postprocessed sequences differ in length")
        frames = self.query_frames
        frames = np.arange(1, raw.size + 1) if frames is None else np.asarray(frames, dtype=np.int64)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "postprocessed", post)
        object.__setattr__(self, "query_frames", frames)

    def __len__(self) -> int:
        return self.raw.size


def init_regressor(spec: RegressionSpec, seed: int, output_bias: float = 0.0) -> ParamStore:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    w = spec.widths
    for i in range(len(w) - 1):
        ad.add_linear(store, f"reg.{i}", w[i], w[i + 1], rng)
    store[f"reg.{len(w) - 2}.bias"].data[...] = output_bias
    return store


def _n_layers(params: ParamStore) -> int:
    return sum(1 for n in params if n.startswith("reg.") and n.endswith(".weight"))


def regressor_forward(x: Tensor, params: ParamStore) -> Tensor:
    n = _n_layers(params)
    h = x
    for i in range(n):
        h = ad.linear(h, params[f"reg.{i}.weight"], params[f"reg.{i}.bias"])
        if i < n - 1:
            h = ad.relu(h)
    return h


def _stack(codes: Sequence[Codeword]) -> np.ndarray:
    return np.stack([c.values for c in codes])


def train_regressor(
    reference_codes: Sequence[Codeword],
    spec: RegressionSpec,
    cfg: RegTrainConfig,
    augment: Callable[[int, np.random.Generator], np.ndarray] | None = None,
) -> tuple[ParamStore, list[float]]:
    """Fit codeword -> frame index with MSE; returns params and per-epoch mean loss.

    ``augment(frame_index, rng)`` may supply a replacement feature vector for a
    training sample (typically the codeword of a re-encoded, rotated cloud); it
    is used only when ``cfg.augment`` is set.
    """
    if len(reference_codes) < 2:
        raise ValueError("need at least 2 reference frames")
    frames = np.array([c.frame_index for c in reference_codes], dtype=np.float64)
    if len(set(frames.tolist())) != len(frames):
        raise ValueError("reference codewords must have distinct frame indices")
    X = _stack(reference_codes)
    if X.shape[1] != spec.widths[0]:
        raise ValueError(f"codeword length {X.shape[1]} does not match regressor input {spec.widths[0]}")
    rng = np.random.default_rng(cfg.rng_seed)
    params = init_regressor(spec, int(rng.integers(2**63)), output_bias=float(frames.mean()))
    adam = ad.AdamConfig(learning_rate=cfg.learning_rate)
    use_aug = cfg.augment and augment is not None
    trace = []
    n = len(frames)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            batch = order[s : s + cfg.batch_size]
            if use_aug:
                xb = np.stack([augment(int(frames[i]), rng) for i in batch])
            else:
                xb = X[batch]
            pred = regressor_forward(Tensor(xb), params)
            loss = ad.mse(pred, frames[batch][:, None])
            ad.backward(loss)
            ad.adam_step(params, adam)
            total += loss.item() * len(batch)
        trace.append(total / n)
        if epoch == 1 or epoch % 50 == 0 or epoch == cfg.epochs:
            log.info("regressor epoch %d/%d mse %.6g", epoch, cfg.epochs, trace[-1])
    return params, trace


def predict_raw(query_codes: Sequence[Codeword], params: ParamStore, reference_T: int) -> np.ndarray:
    X = _stack(query_codes)
    width = params["reg.0.weight"].shape[0]
    if X.shape[1] != width:
        raise ValueError(f"codeword length {X.shape[1]} does not match regressor input {width}")
    out = regressor_forward(Tensor(X), params).data[:, 0]
    return np.clip(out, 1.0, float(reference_T))


def predict_alignment(query_codes: Sequence[Codeword], params: ParamStore, reference_T: int) -> AlignmentSequence:
    """Raw per-frame predictions clamped to [1, reference_T]; ``postprocessed`` is filled in too."""
    raw = predict_raw(query_codes, params, reference_T)
    frames = [c.frame_index if c.frame_index is not None else i + 1 for i, c in enumerate(query_codes)]
    return AlignmentSequence(raw, postprocess_monotone(raw), reference_T, np.asarray(frames))


def monotone_envelopes(raw) -> tuple[np.ndarray, np.ndarray]:
    """(upper, lower): running max from the left and running min from the right."""
    r = np.asarray(raw, dtype=np.float64)
    if r.size == 0:
        raise ValueError("empty sequence")
    upper = np.maximum.accumulate(r)
    lower = np.minimum.accumulate(r[::-1])[::-1]
    return upper, lower


def postprocess_monotone(raw) -> np.ndarray:
    """Mean of the least non-decreasing majorant and the greatest non-decreasing minorant."""
    upper, lower = monotone_envelopes(raw)
    return (upper + lower) / 2.0


def alignment_error(predicted, ground_truth, minutes_per_frame: float = 1.0) -> float:
    """Mean absolute index mismatch, in minutes."""
    p = np.asarray(predicted, dtype=np.float64)
    g = np.asarray(ground_truth, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {p.size} predicted vs {g.size} ground truth")
    if p.size == 0:
        raise ValueError("empty sequences")
    return float(np.mean(np.abs(p - g)) * minutes_per_frame)
