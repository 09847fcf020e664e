import numpy as np
import pytest

from snapsci.containers import ColorVideoCube, VideoCube
from snapsci.metrics import psnr, ssim, video_metrics


class TestPsnr:
    def test_identical_is_inf(self):
        a = np.full((8, 8), 0.3)
        assert psnr(a, a) == float("inf")

    def test_uniform_error_is_20db(self):
        a = np.full((8, 8), 0.5)
        b = np.full((8, 8), 0.6)
        assert psnr(a, b) == 20.0

    def test_matches_direct_formula(self, rng):
        a = rng.random((12, 12))
        b = rng.random((12, 12))
        want = 10.0 * np.log10(1.0 / np.mean((a - b) ** 2))
        assert psnr(a, b) == pytest.approx(want, rel=1e-12)

    def test_symmetry(self, rng):
        a, b = rng.random((10, 10)), rng.random((10, 10))
        assert psnr(a, b) == psnr(b, a)

    def test_peak_scaling(self, rng):
        a, b = rng.random((10, 10)), rng.random((10, 10))
        assert psnr(2 * a, 2 * b, peak=2.0) == pytest.approx(psnr(a, b), rel=1e-12)


class TestSsim:
    def test_identical_is_one(self, rng):
        a = rng.random((16, 16))
        assert ssim(a, a) == 1.0

    def test_negated_structure_below_one(self):
        t = np.linspace(0, 4 * np.pi, 16)
        pattern = 0.2 * np.sin(t)[None, :] * np.ones((16, 1))
        a = 0.5 + pattern
        b = 0.5 - pattern
        assert ssim(a, b) < 1.0

    def test_noise_monotonicity(self, rng):
        a = rng.random((24, 24))
        light = np.clip(a + rng.normal(0, 0.02, a.shape), 0, 1)
        heavy = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
        assert ssim(a, heavy) < ssim(a, light)

    def test_pinned_reference_value(self):
        # frozen from scikit-image structural_similarity with an 11x11
        # Gaussian window (sigma 1.5), population covariances, data_range 1
        fix_rng = np.random.default_rng(77)
        a = fix_rng.random((16, 16))
        b = np.clip(a + fix_rng.normal(0, 0.05, (16, 16)), 0, 1)
        assert ssim(a, b) == pytest.approx(0.9858026228484014, abs=1e-6)

    def test_symmetry(self, rng):
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert ssim(a, b) == pytest.approx(ssim(b, a), rel=1e-12)

    def test_small_frames_rejected(self, rng):
        with pytest.raises(ValueError):
            ssim(rng.random((8, 8)), rng.random((8, 8)))


class TestVideoMetrics:
    def test_identical_video(self, rng):
        x = VideoCube(rng.random((16, 16, 3)))
        rep = video_metrics(x, x)
        assert all(p == float("inf") for p in rep.psnr_frames)
        assert all(s == 1.0 for s in rep.ssim_frames)
        assert rep.mean_ssim == 1.0

    def test_single_corrupted_frame(self, rng):
        a = rng.random((16, 16, 3))
        b = a.copy()
        b[:, :, 1] = np.clip(b[:, :, 1] + 0.2, 0, 1)
        rep = video_metrics(VideoCube(a), VideoCube(b))
        assert rep.psnr_frames[0] == float("inf")
        assert rep.psnr_frames[2] == float("inf")
        assert np.isfinite(rep.psnr_frames[1])
        assert rep.ssim_frames[1] < 1.0

    def test_means_are_arithmetic(self, rng):
        a = VideoCube(rng.random((16, 16, 4)))
        b = VideoCube(np.clip(a.data + rng.normal(0, 0.05, a.data.shape), 0, 1))
        rep = video_metrics(a, b)
        assert rep.mean_psnr == pytest.approx(np.mean(rep.psnr_frames))
        assert rep.mean_ssim == pytest.approx(np.mean(rep.ssim_frames))

    def test_color_channels_averaged(self, rng):
        a = rng.random((16, 16, 3, 2))
        rep = video_metrics(ColorVideoCube(a), ColorVideoCube(a))
        assert rep.mean_ssim == 1.0
        assert len(rep.psnr_frames) == 2

    def test_convention_documented(self, rng):
        x = VideoCube(rng.random((16, 16, 2)))
        assert video_metrics(x, x).convention

    def test_without_ssim(self, rng):
        x = VideoCube(rng.random((16, 16, 2)))
        rep = video_metrics(x, x, with_ssim=False)
        assert rep.ssim_frames == [] or all(s is None for s in rep.ssim_frames)
