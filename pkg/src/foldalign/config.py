"""Pipeline configuration and the named ``paper`` / ``desk`` profiles."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .alignreg import RegressionSpec, RegTrainConfig
from .foldnet import DecoderSpec, EncoderSpec, TrainConfig
from .geometry import EmbryoSimSpec
from .io import load_dataclass, to_jsonable
from .warp import WarpFamily, WarpSpec

PROFILES = ("paper", "desk")
SIM_RADIUS = 300.0


@dataclass(frozen=True)
class Paths:
    data_dir: str = "data"
    output_dir: str = "out"
    checkpoint_dir: str = "checkpoints"


@dataclass(frozen=True)
class PipelineConfig:
    profile: str = "desk"
    rng_seed: int = 0
    paths: Paths = field(default_factory=Paths)
    sim: EmbryoSimSpec = field(default_factory=EmbryoSimSpec)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    decoder: DecoderSpec = field(default_factory=DecoderSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    regression: RegressionSpec = field(default_factory=RegressionSpec)
    reg_train: RegTrainConfig = field(default_factory=RegTrainConfig)
    warps: tuple[WarpSpec, ...] = ()
    tsne_perplexity: float = 30.0
    tsne_iterations: int = 1000

    @property
    def encode_points(self) -> int:
        return self.train.input_points


def _warps(jitter: float) -> tuple[WarpSpec, ...]:
    return tuple(WarpSpec(family=f, jitter_sigma2=jitter) for f in WarpFamily)


def paper_profile() -> PipelineConfig:
    return PipelineConfig(
        profile="paper",
        sim=EmbryoSimSpec(total_frames=370, radius=SIM_RADIUS),
        encoder=EncoderSpec(coord_scale=SIM_RADIUS),
        decoder=DecoderSpec(template_size=2025, coord_scale=SIM_RADIUS),
        train=TrainConfig(epochs=250, learning_rate=1e-4, input_points=4096, rotation_degrees=360.0),
        reg_train=RegTrainConfig(epochs=700, learning_rate=1e-5),
        warps=_warps(5.0),
    )


def desk_profile() -> PipelineConfig:
    return PipelineConfig(
        profile="desk",
        sim=EmbryoSimSpec(total_frames=120, radius=SIM_RADIUS),
        encoder=EncoderSpec(coord_scale=SIM_RADIUS),
        decoder=DecoderSpec(template_size=512, coord_scale=SIM_RADIUS),
        train=TrainConfig(epochs=50, learning_rate=1e-4, input_points=512, rotation_degrees=0.0),
        reg_train=RegTrainConfig(epochs=300, learning_rate=1e-3),
        warps=_warps(5.0),
        tsne_iterations=750,
    )


def profile_defaults(name: str) -> PipelineConfig:
    if name == "paper":
        return paper_profile()
    if name == "desk":
        return desk_profile()
    raise ValueError(f"unknown profile {name!r}; choose from {', '.join(PROFILES)}")


def with_seed(cfg: PipelineConfig, seed: int) -> PipelineConfig:
    """Propagate one global seed into every seeded sub-config."""
    return replace(
        cfg,
        rng_seed=seed,
        sim=replace(cfg.sim, rng_seed=seed),
        train=replace(cfg.train, rng_seed=seed),
        reg_train=replace(cfg.reg_train, rng_seed=seed),
        warps=tuple(replace(w, rng_seed=seed) for w in cfg.warps),
    )


_SECTIONS = {
    "paths": Paths,
    "sim": EmbryoSimSpec,
    "encoder": EncoderSpec,
    "decoder": DecoderSpec,
    "train": TrainConfig,
    "regression": RegressionSpec,
    "reg_train": RegTrainConfig,
}


def _merge(base, overrides: dict):
    current = to_jsonable(base)
    current.update(overrides)
    return load_dataclass(type(base), current)


def config_from_dict(data: dict, profile: str | None = None, seed: int | None = None) -> PipelineConfig:
    data = dict(data)
    cfg = profile_defaults(profile or data.pop("profile", "desk"))
    data.pop("profile", None)
    updates = {}
    for key, value in data.items():
        if key in _SECTIONS:
            updates[key] = _merge(getattr(cfg, key), value)
        elif key == "warps":
            updates[key] = tuple(load_dataclass(WarpSpec, w) for w in value)
        elif key in ("rng_seed", "tsne_perplexity", "tsne_iterations"):
            updates[key] = value
        else:
            raise ValueError(f"unknown config section {key!r}")
    cfg = replace(cfg, **updates)
    if seed is not None:
        cfg = with_seed(cfg, seed)
    elif "rng_seed" in data:
        cfg = with_seed(cfg, int(data["rng_seed"]))
    _validate(cfg)
    return cfg


def _validate(cfg: PipelineConfig) -> None:
    if cfg.regression.widths[0] != cfg.encoder.codeword_dim:
        raise ValueError("regressor input width must equal the codeword dimension")
    if cfg.train.input_points < cfg.encoder.knn_k + 1:
        raise ValueError("input_points must exceed the encoder's knn_k")


def load_config(path: str | Path | None, profile: str | None = None, seed: int | None = None) -> PipelineConfig:
    data = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{p}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return config_from_dict(data, profile=profile, seed=seed)


def config_to_dict(cfg: PipelineConfig) -> dict:
    return to_jsonable(cfg)


def fields_of(cls) -> list[str]:
    return [f.name for f in dataclasses.fields(cls)]
