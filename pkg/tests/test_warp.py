import math

import numpy as np
import pytest

from foldalign.geometry import PointCloud, SeriesFrameSet
from foldalign.warp import WarpFamily, WarpSpec, apply_warp, ground_truth_indices, warp_function

ALL = list(WarpFamily)


def reference(T, seed=0):
    rng = np.random.default_rng(seed)
    return SeriesFrameSet(tuple(PointCloud(rng.normal(size=(rng.integers(5, 15), 3))) for _ in range(T)))


class TestWarpFunction:
    @pytest.mark.parametrize("family", ALL)
    def test_endpoints(self, family):
        spec = WarpSpec(family=family)
        assert warp_function(spec, 0.0) == 0.0
        assert warp_function(spec, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_faster(self):
        spec = WarpSpec(family="Faster", speed_factor=3.0)
        assert warp_function(spec, 0.2) == pytest.approx(0.6, abs=1e-15)
        assert warp_function(spec, 0.5) == 1.0

    def test_cos_fast_start_sin_slow_start(self):
        assert warp_function(WarpSpec(family="Cos"), 0.5) == pytest.approx(math.sin(math.pi / 4), abs=1e-15)
        assert warp_function(WarpSpec(family="Cos"), 0.5) > 0.5
        assert warp_function(WarpSpec(family="Sin"), 0.5) < 0.5

    @pytest.mark.parametrize("family", ALL)
    def test_monotone(self, family):
        s = np.linspace(0, 1, 2001)
        f = [warp_function(WarpSpec(family=family, rng_seed=7), x) for x in s]
        assert np.all(np.diff(f) >= 0)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            warp_function(WarpSpec(), 1.5)

    def test_parse_and_validation(self):
        assert WarpFamily.parse("gaussian") is WarpFamily.GAUSSIAN
        with pytest.raises(ValueError):
            WarpFamily.parse("linear-ish")
        with pytest.raises(ValueError):
            WarpSpec(speed_factor=0)
        with pytest.raises(ValueError):
            WarpSpec(jitter_sigma2=-1)


class TestGroundTruth:
    def test_faster_closed_form(self):
        gt = ground_truth_indices(WarpSpec(family="Faster", speed_factor=3.0), 370)
        assert gt[40] == 121.0
        i = np.arange(1, 371)
        pre = 1 + 3 * (i - 1) <= 370
        assert np.array_equal(gt[pre], (1 + 3 * (i - 1))[pre].astype(float))
        assert np.all(gt[~pre] == 370)

    @pytest.mark.parametrize("family", ALL)
    @pytest.mark.parametrize("T", [2, 3, 120, 370])
    def test_monotone_in_range(self, family, T):
        gt = ground_truth_indices(WarpSpec(family=family, rng_seed=T), T)
        assert gt.shape == (T,)
        assert np.all(np.diff(gt) >= 0)
        assert gt.min() >= 1 and gt.max() <= T
        assert gt[0] == 1.0

    def test_gaussian_seeded(self):
        a = ground_truth_indices(WarpSpec(family="Gaussian", rng_seed=1), 100)
        b = ground_truth_indices(WarpSpec(family="Gaussian", rng_seed=1), 100)
        c = ground_truth_indices(WarpSpec(family="Gaussian", rng_seed=2), 100)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestApplyWarp:
    def test_identity_like(self):
        ref = reference(20)
        out = apply_warp(ref, WarpSpec(family="Faster", speed_factor=1.0, jitter_sigma2=0.0))
        assert out.ground_truth.tolist() == list(range(1, 21))
        assert all(np.array_equal(a.points, b.points) for a, b in zip(out.frames, ref))

    @pytest.mark.parametrize("family", ALL)
    def test_zero_jitter_frames_from_reference(self, family):
        ref = reference(30, seed=3)
        out = apply_warp(ref, WarpSpec(family=family, jitter_sigma2=0.0, rng_seed=5))
        assert len(out.frames) == 30
        for i, frame in enumerate(out.frames, start=1):
            nearest = int(np.floor(out.ground_truth[i - 1] + 0.5))
            assert np.array_equal(frame.points, ref[nearest].points)
            assert frame.frame_index == i

    def test_jitter_applied_and_deterministic(self):
        ref = reference(10)
        spec = WarpSpec(family="Sin", jitter_sigma2=5.0, rng_seed=2)
        a, b = apply_warp(ref, spec), apply_warp(ref, spec)
        assert all(x == y for x, y in zip(a.frames, b.frames))
        assert not np.array_equal(a.frames[1].points, ref[1].points)
