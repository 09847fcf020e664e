"""RGGB Bayer pipeline: mosaic/deinterleave operators, bilinear and
gradient-corrected (Malvar-style 5x5) demosaicing, and joint
reconstruction-demosaicing solvers.

Tiling convention per 2x2 block, frame-wise: (even row, even col) -> R,
(even, odd) -> G1, (odd, even) -> G2, (odd, odd) -> B.
"""

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

from .containers import BayerVideo, ColorVideoCube, Measurement, VideoCube
from .denoisers import DenoiserBinding, make_denoiser
from .operators import SensingOperator, forward, project_onto_manifold
from .solvers import (GapConfig, RunReport, _check_finite, _initial_v,
                      lambda_schedule_step, residual_delta)


@dataclass
class ChannelQuad:
    r: VideoCube
    g1: VideoCube
    g2: VideoCube
    b: VideoCube

    def __post_init__(self):
        shapes = {self.r.shape, self.g1.shape, self.g2.shape, self.b.shape}
        if len(shapes) != 1:
            raise ValueError(f"channel shapes differ: {shapes}")


def _bayer_data(x):
    if isinstance(x, (BayerVideo, VideoCube)):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _check_even(shape):
    if shape[0] % 2 or shape[1] % 2:
        raise ValueError("spatial dims must be even for RGGB tiling")


def mosaic(x):
    """Sample one color per pixel from an RGB video onto the RGGB grid."""
    xd = x.data if isinstance(x, ColorVideoCube) else np.asarray(x, dtype=np.float64)
    _check_even(xd.shape)
    out = np.empty((xd.shape[0], xd.shape[1], xd.shape[3]))
    out[0::2, 0::2, :] = xd[0::2, 0::2, 0, :]
    out[0::2, 1::2, :] = xd[0::2, 1::2, 1, :]
    out[1::2, 0::2, :] = xd[1::2, 0::2, 1, :]
    out[1::2, 1::2, :] = xd[1::2, 1::2, 2, :]
    return BayerVideo(out)


def deinterleave(bv):
    """Split the Bayer grid into four quarter-resolution channel cubes."""
    d = _bayer_data(bv)
    _check_even(d.shape)
    return ChannelQuad(
        r=VideoCube(d[0::2, 0::2, :]),
        g1=VideoCube(d[0::2, 1::2, :]),
        g2=VideoCube(d[1::2, 0::2, :]),
        b=VideoCube(d[1::2, 1::2, :]),
    )


def interleave(quad):
    """Exact inverse of deinterleave."""
    r, g1, g2, b = quad.r.data, quad.g1.data, quad.g2.data, quad.b.data
    n_x, n_y, nb = r.shape
    out = np.empty((2 * n_x, 2 * n_y, nb))
    out[0::2, 0::2, :] = r
    out[0::2, 1::2, :] = g1
    out[1::2, 0::2, :] = g2
    out[1::2, 1::2, :] = b
    return BayerVideo(out)


def _site_masks(shape):
    rows = np.arange(shape[0])[:, None]
    cols = np.arange(shape[1])[None, :]
    even_r = rows % 2 == 0
    even_c = cols % 2 == 0
    return {
        "r": even_r & even_c,
        "g1": even_r & ~even_c,
        "g2": ~even_r & even_c,
        "b": ~even_r & ~even_c,
    }


_BILINEAR_G = np.array([[0.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 0.0]]) / 4.0
_BILINEAR_RB = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 4.0


def demosaic_bilinear(frame):
    """Channel-wise linear interpolation from same-channel neighbors."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("expected a 2-D Bayer frame")
    _check_even(f.shape)
    sites = _site_masks(f.shape)
    out = np.empty(f.shape + (3,))
    plan = {0: sites["r"], 1: sites["g1"] | sites["g2"], 2: sites["b"]}
    for channel, mask in plan.items():
        kernel = _BILINEAR_G if channel == 1 else _BILINEAR_RB
        m = mask.astype(np.float64)
        num = correlate(f * m, kernel, mode="reflect")
        den = correlate(m, kernel, mode="reflect")
        out[:, :, channel] = num / den
    return out


# Gradient-corrected 5x5 interpolation kernels (coefficients x 1/8).
_K_G_AT_RB = np.array([
    [0, 0, -1, 0, 0],
    [0, 0, 2, 0, 0],
    [-1, 2, 4, 2, -1],
    [0, 0, 2, 0, 0],
    [0, 0, -1, 0, 0],
]) / 8.0
_K_SAME_ROW = np.array([
    [0, 0, 0.5, 0, 0],
    [0, -1, 0, -1, 0],
    [-1, 4, 5, 4, -1],
    [0, -1, 0, -1, 0],
    [0, 0, 0.5, 0, 0],
]) / 8.0
_K_SAME_COL = _K_SAME_ROW.T
_K_DIAGONAL = np.array([
    [0, 0, -1.5, 0, 0],
    [0, 2, 0, 2, 0],
    [-1.5, 0, 6, 0, -1.5],
    [0, 2, 0, 2, 0],
    [0, 0, -1.5, 0, 0],
]) / 8.0


def demosaic_malvar(frame):
    """Gradient-corrected linear interpolation with fixed 5x5 kernels."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("expected a 2-D Bayer frame")
    _check_even(f.shape)
    if f.shape[0] < 5 or f.shape[1] < 5:
        raise ValueError("frame must be at least 5x5 for the 5x5 kernels")
    sites = _site_masks(f.shape)
    # "mirror" keeps the RGGB parity intact across the border, so constant
    # inputs interpolate exactly everywhere
    g_rb = correlate(f, _K_G_AT_RB, mode="mirror")
    same_row = correlate(f, _K_SAME_ROW, mode="mirror")
    same_col = correlate(f, _K_SAME_COL, mode="mirror")
    diagonal = correlate(f, _K_DIAGONAL, mode="mirror")

    red = np.where(sites["r"], f,
                   np.where(sites["g1"], same_row,
                            np.where(sites["g2"], same_col, diagonal)))
    green = np.where(sites["g1"] | sites["g2"], f, g_rb)
    blue = np.where(sites["b"], f,
                    np.where(sites["g2"], same_row,
                             np.where(sites["g1"], same_col, diagonal)))
    return np.clip(np.stack([red, green, blue], axis=2), 0.0, 1.0)


_DEMOSAICERS = {"bilinear": demosaic_bilinear, "malvar": demosaic_malvar}


def demosaic_video(bv, method="malvar"):
    """Apply a frame-wise demosaicer to a Bayer video; returns an RGB array."""
    fn = _DEMOSAICERS[method]
    d = _bayer_data(bv)
    return np.stack([fn(d[:, :, b]) for b in range(d.shape[2])], axis=3)


def _require_color_denoiser(denoiser):
    if isinstance(denoiser, DenoiserBinding) and not denoiser.color:
        raise ValueError("joint color solve needs a binding with color=True")


def joint_color_solve(y, masks, demosaicer="malvar", color_denoiser=None,
                      cfg=None, mode="per_iteration", ground_truth=None):
    """Joint reconstruction and demosaicing on the Bayer measurement grid.

    per_iteration: every iteration projects on the Bayer grid, demosaics,
    color-denoises, and mosaics back. halfres_proxy: the color denoiser sees a
    half-resolution RGB proxy (averaged G sites) each iteration and the full
    demosaicer runs once at the end.
    """
    if mode not in ("per_iteration", "halfres_proxy"):
        raise ValueError(f"unknown mode {mode!r}")
    if color_denoiser is None:
        color_denoiser = DenoiserBinding(kind="tv3d", color=True)
    _require_color_denoiser(color_denoiser)
    cfg = cfg or GapConfig()
    den = make_denoiser(color_denoiser)
    demosaic_frame = _DEMOSAICERS[demosaicer]
    yd = y.data if isinstance(y, Measurement) else np.asarray(y, dtype=np.float64)
    op = masks if isinstance(masks, SensingOperator) else SensingOperator(masks)
    gt = ground_truth.data if isinstance(ground_truth, ColorVideoCube) else ground_truth

    v = _initial_v(cfg, yd, op)  # Bayer-domain auxiliary variable
    x = v.copy()
    lam = cfg.lambda0
    delta_prev = None
    rgb = None
    report = RunReport()
    nb = op.masks.shape[2]
    for k in range(cfg.max_iters):
        t0 = time.perf_counter()
        sigma = max(math.sqrt(lam), cfg.sigma_floor)
        x_next = project_onto_manifold(v, yd, op)
        _check_finite(x_next, k)
        if mode == "per_iteration":
            rgb = np.stack([demosaic_frame(x_next[:, :, b]) for b in range(nb)], axis=3)
            rgb = den(rgb, sigma, k)
            v_next = mosaic(rgb).data
        else:
            proxy, detail = _halfres_proxy(x_next)
            proxy = den(proxy, sigma, k)
            v_next = _halfres_restore(proxy, detail)
        _check_finite(v_next, k)
        delta = residual_delta(x, x_next, v, v_next)
        residual = np.linalg.norm(yd - forward(x_next, op))
        psnr_db = None
        if gt is not None and rgb is not None:
            from .metrics import video_metrics

            psnr_db = video_metrics(gt, np.clip(rgb, 0.0, 1.0), with_ssim=False).mean_psnr
        millis = (time.perf_counter() - t0) * 1000.0
        report.record(k, lam, sigma, delta, residual, psnr_db, None, millis)
        if delta_prev is None:
            delta_prev = delta
        lam = lambda_schedule_step(delta_prev, delta, lam, cfg)
        delta_prev = delta
        x, v = x_next, v_next
    if mode == "per_iteration":
        out = np.clip(rgb, 0.0, 1.0)
    else:
        out = np.clip(np.stack([demosaic_frame(v[:, :, b]) for b in range(v.shape[2])],
                               axis=3), 0.0, 1.0)
    return ColorVideoCube(out), report


def _halfres_proxy(bayer):
    """Half-resolution RGB proxy with averaged G sites, plus the G detail."""
    r = bayer[0::2, 0::2, :]
    g1 = bayer[0::2, 1::2, :]
    g2 = bayer[1::2, 0::2, :]
    b = bayer[1::2, 1::2, :]
    g = 0.5 * (g1 + g2)
    proxy = np.stack([r, g, b], axis=2)
    return proxy, 0.5 * (g1 - g2)


def _halfres_restore(proxy, detail):
    """Rebuild the Bayer grid from a denoised proxy, keeping the G1-G2 split."""
    n_x, n_y = proxy.shape[0] * 2, proxy.shape[1] * 2
    out = np.empty((n_x, n_y, proxy.shape[3]))
    out[0::2, 0::2, :] = proxy[:, :, 0, :]
    out[0::2, 1::2, :] = proxy[:, :, 1, :] + detail
    out[1::2, 0::2, :] = proxy[:, :, 1, :] - detail
    out[1::2, 1::2, :] = proxy[:, :, 2, :]
    return out


def channelwise_color_solve(y, masks, denoiser=None, cfg=None, demosaicer="malvar"):
    """Baseline: four independent grayscale solves on the deinterleaved
    quarter-resolution channels, then interleave and demosaic per frame."""
    from .solvers import gap_solve

    if denoiser is None:
        denoiser = DenoiserBinding(kind="tv3d")
    cfg = cfg or GapConfig()
    yd = y.data if isinstance(y, Measurement) else np.asarray(y, dtype=np.float64)
    _check_even(yd.shape)
    if isinstance(masks, SensingOperator):
        masks = masks.masks
    mask_quad = deinterleave(masks.data if hasattr(masks, "data") else masks)
    y_quad = {
        "r": yd[0::2, 0::2], "g1": yd[0::2, 1::2],
        "g2": yd[1::2, 0::2], "b": yd[1::2, 1::2],
    }
    recon = {}
    for name, mask_cube in (("r", mask_quad.r), ("g1", mask_quad.g1),
                            ("g2", mask_quad.g2), ("b", mask_quad.b)):
        op = SensingOperator(mask_cube.data)
        out, _ = gap_solve(y_quad[name], op, denoiser, cfg)
        recon[name] = out
    bv = interleave(ChannelQuad(recon["r"], recon["g1"], recon["g2"], recon["b"]))
    return ColorVideoCube(demosaic_video(bv, demosaicer))
