"""Synthetic time warps of a reference series with known frame correspondences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import SeriesFrameSet, jitter


class WarpFamily(str, Enum):
    COS = "Cos"
    SIN = "Sin"
    GAUSSIAN = "Gaussian"
    FASTER = "Faster"

    @classmethod
    def parse(cls, value) -> "WarpFamily":
        if isinstance(value, cls):
            return value
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        raise ValueError(f"unknown warp family {value!r}")


@dataclass(frozen=True)
class WarpSpec:
    family: WarpFamily = WarpFamily.COS
    speed_factor: float = 3.0
    gaussian_sigma: float = 0.5
    gaussian_steps: int = 256
    jitter_sigma2: float = 5.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", WarpFamily.parse(self.family))
        if not self.speed_factor > 0:
            raise ValueError("speed_factor must be positive")
        if self.gaussian_sigma < 0:
            raise ValueError("gaussian_sigma must be >= 0")
        if self.gaussian_steps < 1:
            raise ValueError("gaussian_steps must be >= 1")
        if self.jitter_sigma2 < 0:
            raise ValueError("jitter_sigma2 must be >= 0")


@dataclass(frozen=True)
class WarpedSeries:
    frames: SeriesFrameSet
    ground_truth: np.ndarray
    spec: WarpSpec


def _gaussian_knots(spec: WarpSpec) -> np.ndarray:
    rng = np.random.default_rng([spec.rng_seed, 0x6A55])
    inc = np.maximum(0.0, 1.0 + rng.normal(0.0, spec.gaussian_sigma, size=spec.gaussian_steps))
    cum = np.concatenate([[0.0], np.cumsum(inc)])
    if cum[-1] <= 0:
        return np.linspace(0.0, 1.0, spec.gaussian_steps + 1)
    return cum / cum[-1]


def warp_function(spec: WarpSpec, s: float) -> float:
    """Monotone map of normalised reference time; f(0) = 0."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    return float(_warp_values(spec, np.array([s]))[0])


def _warp_values(spec: WarpSpec, s: np.ndarray) -> np.ndarray:
    fam = spec.family
    if fam is WarpFamily.COS:
        return np.sin(math.pi * s / 2)
    if fam is WarpFamily.SIN:
        return 1.0 - np.cos(math.pi * s / 2)
    if fam is WarpFamily.FASTER:
        return np.minimum(spec.speed_factor * s, 1.0)
    knots = _gaussian_knots(spec)
    return np.interp(s, np.linspace(0.0, 1.0, knots.size), knots)


def ground_truth_indices(spec: WarpSpec, T: int) -> np.ndarray:
    """Reference (fractional) frame index for each warped frame 1..T."""
    steps = np.arange(T, dtype=np.float64)
    if spec.family is WarpFamily.FASTER:
        # index space directly, so the linear ramp 1 + factor*(i-1) is exact
        return 1.0 + np.minimum(spec.speed_factor * steps, T - 1)
    f = _warp_values(spec, steps / (T - 1))
    return 1.0 + np.clip(f, 0.0, 1.0) * (T - 1)


def apply_warp(reference: SeriesFrameSet, spec: WarpSpec) -> WarpedSeries:
    T = len(reference)
    if T < 2:
        raise ValueError("reference needs at least 2 frames")
    gt = ground_truth_indices(spec, T)
    source = np.clip(np.floor(gt + 0.5).astype(np.int64), 1, T)
    frames = []
    for i, src in enumerate(source, start=1):
        cloud = reference[int(src)].with_frame_index(i)
        cloud = jitter(cloud, spec.jitter_sigma2, [spec.rng_seed, i])
        frames.append(cloud)
    return WarpedSeries(SeriesFrameSet(tuple(frames), reference.minutes_per_frame), gt, spec)
