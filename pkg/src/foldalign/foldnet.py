"""FoldingNet-style autoencoder with a spherical template.

Encoder: per-point (xyz + local 3x3 covariance) MLP, two graph layers
(neighbourhood max then linear+ReLU), global max pool, codeword MLP.
Decoder: two folding MLPs, each fed the codeword concatenated with a 3D point
(template point for the first fold, first-fold output for the second).

Coordinates are divided by ``coord_scale`` on the way in and multiplied on the
way out; the scale is a fixed constant, not a per-cloud normalisation, so
absolute position (e.g. centroid drift) stays visible to the network.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .geometry import (
    PointCloud,
    SeriesFrameSet,
    SphericalTemplate,
    center,
    jitter,
    make_planar_template,
    make_spherical_template,
    random_rotation_angles,
    rotate,
    sample_fixed,
)
from .spatial import knn_graph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderSpec:
    knn_k: int = 16
    point_mlp: tuple[int, ...] = (12, 64, 64, 64)
    graph_widths: tuple[tuple[int, int], ...] = ((64, 128), (128, 1024))
    codeword_mlp: tuple[int, ...] = (1024, 512, 256)
    codeword_dim: int = 256
    coord_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "point_mlp", tuple(self.point_mlp))
        object.__setattr__(self, "graph_widths", tuple(tuple(w) for w in self.graph_widths))
        object.__setattr__(self, "codeword_mlp", tuple(self.codeword_mlp))
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        if self.point_mlp[0] != 12:
            raise ValueError("per-point input is xyz + flattened 3x3 covariance (12 values)")
        if self.codeword_mlp[-1] != self.codeword_dim:
            raise ValueError("codeword MLP must end at codeword_dim")
        if self.graph_widths[0][0] != self.point_mlp[-1] or self.graph_widths[-1][1] != self.codeword_mlp[0]:
            raise ValueError("layer widths do not chain")
        if not self.coord_scale > 0:
            raise ValueError("coord_scale must be positive")


@dataclass(frozen=True)
class DecoderSpec:
    template_size: int = 2025
    fold_hidden: tuple[int, ...] = (512, 512)
    template: str = "sphere"
    coord_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "fold_hidden", tuple(self.fold_hidden))
        if self.template not in ("sphere", "plane"):
            raise ValueError("template must be 'sphere' or 'plane'")
        if not self.coord_scale > 0:
            raise ValueError("coord_scale must be positive")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 250
    learning_rate: float = 1e-4
    batch_size: int = 1
    loss: str = "mcd"
    mcd_k: int = 20
    input_points: int = 4096
    rotation_degrees: float = 360.0
    jitter_sigma2: float = 0.0
    center_inputs: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.input_points < 1:
            raise ValueError("input_points must be >= 1")
        if self.batch_size != 1:
            raise ValueError("only batch_size=1 is supported")
        if self.loss not in ("mcd", "cd"):
            raise ValueError("loss must be 'mcd' or 'cd'")

    @property
    def loss_k(self) -> int:
        return self.mcd_k if self.loss == "mcd" else 1


@dataclass(frozen=True, eq=False)
class Codeword:
    values: np.ndarray
    frame_index: int | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("codeword has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]


def build_template(spec: DecoderSpec) -> SphericalTemplate:
    if spec.template == "plane":
        return make_planar_template(spec.template_size)
    return make_spherical_template(spec.template_size)


def init_autoencoder(enc: EncoderSpec, dec: DecoderSpec, seed: int) -> ParamStore:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    widths = enc.point_mlp
    for i in range(len(widths) - 1):
        ad.add_linear(store, f"enc.point.{i}", widths[i], widths[i + 1], rng)
    for i, (a, b) in enumerate(enc.graph_widths):
        ad.add_linear(store, f"enc.graph.{i}", a, b, rng)
    widths = enc.codeword_mlp
    for i in range(len(widths) - 1):
        ad.add_linear(store, f"enc.code.{i}", widths[i], widths[i + 1], rng)
    c = enc.codeword_dim
    for fold in (1, 2):
        hidden = dec.fold_hidden
        # first layer acts on (codeword ++ point); its weight is held as two blocks
        fan_in = c + 3
        w = ad.kaiming_uniform(rng, fan_in, hidden[0])
        store.add(f"dec.fold{fold}.0.weight_code", w[:c])
        store.add(f"dec.fold{fold}.0.weight_point", w[c:])
        store.add(f"dec.fold{fold}.0.bias", np.zeros((1, hidden[0])))
        dims = list(hidden) + [3]
        for i in range(len(dims) - 1):
            ad.add_linear(store, f"dec.fold{fold}.{i + 1}", dims[i], dims[i + 1], rng)
    return store


def _lin(x: Tensor, params: ParamStore, prefix: str) -> Tensor:
    return ad.linear(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"])


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Lexicographic (x, y, z) row order; makes encoding independent of input order."""
    return points[np.lexsort((points[:, 2], points[:, 1], points[:, 0]))]


def local_features(points: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-point ``xyz ++ covariance`` (n, 12) and the neighbourhood table (n, k+1), self first."""
    graph = knn_graph(points, k)
    groups = np.concatenate([np.arange(points.shape[0])[:, None], graph], axis=1)
    nb = points[groups]
    dev = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", dev, dev) / groups.shape[1]
    return np.concatenate([points, cov.reshape(-1, 9)], axis=1), groups


def encoder_forward(points: np.ndarray, spec: EncoderSpec, params: ParamStore) -> Tensor:
    """Codeword tensor ``(1, codeword_dim)`` for already-scaled, canonically ordered points."""
    if points.shape[0] < spec.knn_k + 1:
        raise ValueError(f"encoder needs at least knn_k+1={spec.knn_k + 1} points, got {points.shape[0]}")
    feats, groups = local_features(points, spec.knn_k)
    h = Tensor(feats)
    for i in range(len(spec.point_mlp) - 1):
        h = ad.relu(_lin(h, params, f"enc.point.{i}"))
    for i in range(len(spec.graph_widths)):
        h = ad.relu(_lin(ad.reduce_max_rows(h, groups), params, f"enc.graph.{i}"))
    h = ad.global_max_pool(h)
    n_code = len(spec.codeword_mlp) - 1
    for i in range(n_code):
        h = _lin(h, params, f"enc.code.{i}")
        if i < n_code - 1:
            h = ad.relu(h)
    return h


def _fold(code: Tensor, pts: Tensor, params: ParamStore, fold: int, n_layers: int) -> Tensor:
    p = f"dec.fold{fold}"
    h = ad.add(
        ad.add(ad.matmul(pts, params[f"{p}.0.weight_point"]), ad.matmul(code, params[f"{p}.0.weight_code"])),
        params[f"{p}.0.bias"],
    )
    h = ad.relu(h)
    for i in range(1, n_layers + 1):
        h = _lin(h, params, f"{p}.{i}")
        if i < n_layers:
            h = ad.relu(h)
    return h


def decoder_forward(code: Tensor, template: np.ndarray, spec: DecoderSpec, params: ParamStore) -> Tensor:
    """Scaled reconstruction ``(M, 3)``."""
    n_layers = len(spec.fold_hidden)
    first = _fold(code, Tensor(template), params, 1, n_layers)
    return _fold(code, first, params, 2, n_layers)


def _prepare(cloud: PointCloud, scale: float) -> np.ndarray:
    return canonical_order(cloud.points / scale)


def encode(cloud: PointCloud, spec: EncoderSpec, params: ParamStore) -> Codeword:
    out = encoder_forward(_prepare(cloud, spec.coord_scale), spec, params)
    return Codeword(out.data[0], cloud.frame_index)


def decode(code: Codeword, template: SphericalTemplate, spec: DecoderSpec, params: ParamStore) -> PointCloud:
    c = Tensor(np.asarray(code.values, dtype=np.float64)[None, :])
    w = params["dec.fold1.0.weight_code"]
    if c.shape[1] != w.shape[0]:
        raise ValueError(f"codeword length {c.shape[1]} does not match decoder input {w.shape[0]}")
    out = decoder_forward(c, template.points, spec, params)
    return PointCloud(out.data * spec.coord_scale, code.frame_index)


def reconstruct(cloud: PointCloud, enc: EncoderSpec, dec: DecoderSpec, params: ParamStore,
                template: SphericalTemplate | None = None) -> PointCloud:
    template = template if template is not None else build_template(dec)
    return decode(encode(cloud, enc, params), template, dec, params)


def train_step(cloud: PointCloud, enc: EncoderSpec, dec: DecoderSpec, params: ParamStore,
               template: np.ndarray, loss_k: int) -> float:
    """Forward + backward on one cloud; gradients are left in ``params``."""
    x = _prepare(cloud, enc.coord_scale)
    code = encoder_forward(x, enc, params)
    recon = decoder_forward(code, template, dec, params)
    loss = ad.mcd_loss(recon, x, loss_k)
    ad.backward(loss)
    return loss.item()


def augment(cloud: PointCloud, cfg: TrainConfig, rng: np.random.Generator) -> PointCloud:
    if cfg.rotation_degrees > 0:
        cloud = rotate(cloud, random_rotation_angles(rng, cfg.rotation_degrees))
    if cfg.jitter_sigma2 > 0:
        cloud = jitter(cloud, cfg.jitter_sigma2, rng.integers(2**63))
    if cfg.center_inputs:
        cloud = center(cloud)
    return cloud


def train_autoencoder(
    series: Sequence[SeriesFrameSet],
    enc: EncoderSpec,
    dec: DecoderSpec,
    cfg: TrainConfig,
    params: ParamStore | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[ParamStore, list[float]]:
    """Batch-size-1 Adam training over every frame of every series; returns params and per-epoch mean loss."""
    if not series:
        raise ValueError("need at least one training series")
    rng = np.random.default_rng(cfg.rng_seed)
    if params is None:
        params = init_autoencoder(enc, dec, int(rng.integers(2**63)))
    template = build_template(dec).points
    frames = [frame for s in series for frame in s]
    adam = ad.AdamConfig(learning_rate=cfg.learning_rate)
    trace: list[float] = []
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for j in rng.permutation(len(frames)):
            sample = sample_fixed(frames[j], cfg.input_points, int(rng.integers(2**63)))
            sample = augment(sample, cfg, rng)
            params.zero_grad()
            total += train_step(sample, enc, dec, params, template, cfg.loss_k)
            ad.adam_step(params, adam)
        trace.append(total / len(frames))
        log.info("autoencoder epoch %d/%d loss %.6g", epoch, cfg.epochs, trace[-1])
        if on_epoch is not None:
            on_epoch(epoch, trace[-1])
    return params, trace


def frame_sample(cloud: PointCloud, n: int, seed: int) -> PointCloud:
    """The fixed-size sample used for inference on one frame (seed mixed with frame index)."""
    return sample_fixed(cloud, n, [seed, cloud.frame_index or 0])


def encode_series(
    series: SeriesFrameSet,
    enc: EncoderSpec,
    params: ParamStore,
    n: int,
    seed: int,
    transform: Callable[[PointCloud], PointCloud] | None = None,
) -> list[Codeword]:
    codes = []
    for frame in series:
        sample = frame_sample(frame, n, seed)
        if transform is not None:
            sample = transform(sample)
        codes.append(encode(sample, enc, params))
    return codes


def reconstruct_series(series: SeriesFrameSet, enc: EncoderSpec, dec: DecoderSpec, params: ParamStore,
                       n: int, seed: int) -> tuple[list[PointCloud], list[PointCloud]]:
    """``(inputs, reconstructions)`` per frame, using the same samples ``encode_series`` would."""
    template = build_template(dec)
    inputs, recons = [], []
    for frame in series:
        sample = frame_sample(frame, n, seed)
        inputs.append(sample)
        recons.append(decode(encode(sample, enc, params), template, dec, params))
    return inputs, recons
