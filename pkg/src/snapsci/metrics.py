"""PSNR and SSIM on frames and video cubes.

SSIM follows the classic protocol: 11x11 Gaussian window with sigma 1.5,
K1 = 0.01, K2 = 0.03, averaged over the valid (unpadded) window region.
Color metrics are computed per RGB channel and averaged.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .containers import ColorVideoCube, VideoCube

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _arr(x):
    if isinstance(x, (VideoCube, ColorVideoCube)):
        return x.data
    return np.asarray(x, dtype=np.float64)


def psnr(ref, test, peak=1.0):
    """10*log10(peak^2 / MSE); identical inputs give the +inf sentinel."""
    r = _arr(ref)
    t = _arr(test)
    if r.shape != t.shape:
        raise ValueError(f"shape mismatch {r.shape} vs {t.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = np.mean((r - t) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size, sigma):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


_WINDOW = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)


def _valid_filter(img, kernel):
    return fftconvolve(img, kernel, mode="valid")


def ssim(ref, test, peak=1.0):
    """Mean local structural similarity over the valid window region."""
    r = _arr(ref)
    t = _arr(test)
    if r.shape != t.shape:
        raise ValueError(f"shape mismatch {r.shape} vs {t.shape}")
    if min(r.shape) < SSIM_WINDOW:
        raise ValueError(f"inputs must be at least {SSIM_WINDOW} pixels per side")
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    w = _WINDOW
    mu_r = _valid_filter(r, w)
    mu_t = _valid_filter(t, w)
    mu_rr = mu_r * mu_r
    mu_tt = mu_t * mu_t
    mu_rt = mu_r * mu_t
    var_r = _valid_filter(r * r, w) - mu_rr
    var_t = _valid_filter(t * t, w) - mu_tt
    cov = _valid_filter(r * t, w) - mu_rt
    num = (2.0 * mu_rt + c1) * (2.0 * cov + c2)
    den = (mu_rr + mu_tt + c1) * (var_r + var_t + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    psnr_frames: list = field(default_factory=list)
    ssim_frames: list = field(default_factory=list)
    convention: str = "per-frame mean; color averaged over RGB channels"

    @property
    def mean_psnr(self):
        return sum(self.psnr_frames) / len(self.psnr_frames)

    @property
    def mean_ssim(self):
        if not self.ssim_frames:
            return None
        return sum(self.ssim_frames) / len(self.ssim_frames)


def video_metrics(ref, test, with_ssim=True):
    """Per-frame PSNR/SSIM and their means; color metrics average the channels."""
    r = _arr(ref)
    t = _arr(test)
    if r.shape != t.shape:
        raise ValueError(f"shape mismatch {r.shape} vs {t.shape}")
    report = MetricReport()
    color = r.ndim == 4
    n_frames = r.shape[-1]
    for b in range(n_frames):
        if color:
            frames = [(r[:, :, c, b], t[:, :, c, b]) for c in range(r.shape[2])]
        else:
            frames = [(r[:, :, b], t[:, :, b])]
        p_vals = [psnr(a, bb) for a, bb in frames]
        report.psnr_frames.append(sum(p_vals) / len(p_vals))
        if with_ssim:
            s_vals = [ssim(a, bb) for a, bb in frames]
            report.ssim_frames.append(sum(s_vals) / len(s_vals))
    return report
