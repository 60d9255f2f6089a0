"""Point-cloud value types, transforms, template construction and the embryo simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class Point3(NamedTuple):
    x: float
    y: float
    z: float


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """One frame's unordered set of 3D points, stored as an ``(n, 3)`` array."""

    points: np.ndarray
    frame_index: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"expected an (n, 3) array, got shape {pts.shape}")
        if pts.shape[0] == 0:
            raise ValueError("point cloud is empty")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains NaN or Inf coordinates")
        if self.frame_index is not None and self.frame_index < 1:
            raise ValueError("frame_index must be >= 1")
        object.__setattr__(self, "points", _frozen(pts))

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]], frame_index: int | None = None) -> "PointCloud":
        return cls(np.asarray(points, dtype=np.float64).reshape(-1, 3), frame_index)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self):
        return (Point3(*map(float, row)) for row in self.points)

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def with_points(self, points: np.ndarray) -> "PointCloud":
        return PointCloud(points, self.frame_index)

    def with_frame_index(self, frame_index: int | None) -> "PointCloud":
        return PointCloud(self.points, frame_index)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.frame_index == other.frame_index and np.array_equal(self.points, other.points)


@dataclass(frozen=True)
class SeriesFrameSet:
    """Frames ordered by time; frame ``i`` (1-based) carries ``frame_index == i``."""

    frames: tuple[PointCloud, ...]
    minutes_per_frame: float = 1.0

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise ValueError("a series needs at least 2 frames")
        if not self.minutes_per_frame > 0:
            raise ValueError("minutes_per_frame must be positive")
        fixed = []
        for i, frame in enumerate(frames, start=1):
            if frame.frame_index is None:
                frame = frame.with_frame_index(i)
            elif frame.frame_index != i:
                raise ValueError(f"frame at position {i} has frame_index {frame.frame_index}")
            fixed.append(frame)
        object.__setattr__(self, "frames", tuple(fixed))

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, frame_index: int) -> PointCloud:
        """1-based access by frame index."""
        if not 1 <= frame_index <= len(self.frames):
            raise IndexError(frame_index)
        return self.frames[frame_index - 1]

    def __iter__(self):
        return iter(self.frames)


@dataclass(frozen=True, eq=False)
class SphericalTemplate:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("template must be (m, 3)")
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class EmbryoSimSpec:
    total_frames: int = 120
    radius: float = 300.0
    start_count: int = 4160
    end_count: int = 19794
    start_polar_extent: float = math.pi / 2
    end_polar_extent: float = math.pi
    dorsal_bias_onset: float = 0.7
    dorsal_bias_strength: float = 3.0
    rng_seed: int = 0

    def validate(self) -> None:
        if self.total_frames < 2:
            raise ValueError("total_frames must be >= 2")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not 1 <= self.start_count <= self.end_count:
            raise ValueError("need 1 <= start_count <= end_count")
        if not 0 <= self.start_polar_extent <= self.end_polar_extent <= math.pi:
            raise ValueError("need 0 <= start_polar_extent <= end_polar_extent <= pi")
        if not 0 <= self.dorsal_bias_onset <= 1:
            raise ValueError("dorsal_bias_onset must lie in [0, 1]")
        if self.dorsal_bias_strength < 0:
            raise ValueError("dorsal_bias_strength must be >= 0")


def sample_fixed(cloud: PointCloud, n: int, seed: int) -> PointCloud:
    """Draw exactly ``n`` points; without replacement when the cloud is large enough."""
    if n < 1:
        raise ValueError("n must be >= 1")
    size = len(cloud)
    rng = np.random.default_rng(seed)
    idx = rng.choice(size, size=n, replace=size < n)
    return cloud.with_points(cloud.points[idx])


def rotation_matrix(angles_xyz: Sequence[float]) -> np.ndarray:
    """Intrinsic x, then y, then z rotation (column-vector convention)."""
    angles = np.asarray(angles_xyz, dtype=np.float64)
    if angles.shape != (3,) or not np.all(np.isfinite(angles)):
        raise ValueError("angles_xyz must be three finite numbers")
    return Rotation.from_euler("XYZ", angles).as_matrix()


def rotate(cloud: PointCloud, angles_xyz: Sequence[float]) -> PointCloud:
    mat = rotation_matrix(angles_xyz)
    return cloud.with_points(cloud.points @ mat.T)


def random_rotation_angles(rng: np.random.Generator, max_degrees: float) -> np.ndarray:
    """Per-axis angles: uniform in [0, 360) deg for ``max_degrees >= 360``, else uniform in +-max_degrees."""
    if max_degrees >= 360:
        return rng.uniform(0.0, 2 * math.pi, size=3)
    lim = math.radians(max_degrees)
    return rng.uniform(-lim, lim, size=3)


def jitter(cloud: PointCloud, sigma2: float, seed) -> PointCloud:
    if sigma2 < 0:
        raise ValueError("jitter variance must be >= 0")
    if sigma2 == 0:
        return cloud
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, math.sqrt(sigma2), size=cloud.points.shape)
    return cloud.with_points(cloud.points + noise)


def center(cloud: PointCloud) -> PointCloud:
    return cloud.with_points(cloud.points - cloud.points.mean(axis=0))


def make_spherical_template(m: int) -> SphericalTemplate:
    """Fibonacci lattice of ``m`` unit vectors."""
    if m < 4:
        raise ValueError("template needs at least 4 points")
    i = np.arange(m, dtype=np.float64)
    y = 1.0 - 2.0 * (i + 0.5) / m
    r = np.sqrt(1.0 - y * y)
    phi = i * GOLDEN_ANGLE
    pts = np.stack([r * np.cos(phi), y, r * np.sin(phi)], axis=1)
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return SphericalTemplate(pts)


def make_planar_template(m: int) -> SphericalTemplate:
    """Square grid in the z=0 plane over [-1, 1]^2 (ablation only)."""
    if m < 4:
        raise ValueError("template needs at least 4 points")
    side = math.ceil(math.sqrt(m))
    g = np.linspace(-1.0, 1.0, side)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), np.zeros(side * side)], axis=1)[:m]
    return SphericalTemplate(pts)


def _simulate_frame(spec: EmbryoSimSpec, t: int) -> np.ndarray:
    T = spec.total_frames
    s = (t - 1) / (T - 1)
    count = int(round(spec.start_count + s * (spec.end_count - spec.start_count)))
    extent = spec.start_polar_extent + s * (spec.end_polar_extent - spec.start_polar_extent)
    rng = np.random.default_rng([spec.rng_seed, t])

    progress = t / T - spec.dorsal_bias_onset
    bias = spec.dorsal_bias_strength * progress if progress > 0 else 0.0
    w_max = 1.0 + bias

    cos_min = math.cos(extent)
    chunks = []
    have = 0
    while have < count:
        batch = max(2 * (count - have), 64)
        cos_t = rng.uniform(cos_min, 1.0, size=batch)
        sin_t = np.sqrt(np.clip(1.0 - cos_t * cos_t, 0.0, None))
        phi = rng.uniform(0.0, 2 * math.pi, size=batch)
        dirs = np.stack([sin_t * np.cos(phi), cos_t, sin_t * np.sin(phi)], axis=1)
        if bias > 0:
            # dirs[:, 0] is cos(angle to +x)
            w = np.clip(1.0 + bias * dirs[:, 0], 0.0, None)
            dirs = dirs[rng.uniform(0.0, w_max, size=batch) < w]
        chunks.append(dirs)
        have += dirs.shape[0]
    dirs = np.concatenate(chunks)[:count]
    radii = spec.radius + rng.normal(0.0, 0.01 * spec.radius, size=count)
    return dirs * radii[:, None]


def simulate_embryo(spec: EmbryoSimSpec) -> SeriesFrameSet:
    """Procedural epiboly: a cap that grows from the +y pole toward -y, densifying toward +x late."""
    spec.validate()
    frames = [PointCloud(_simulate_frame(spec, t), t) for t in range(1, spec.total_frames + 1)]
    return SeriesFrameSet(tuple(frames))
