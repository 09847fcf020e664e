"""Plug-and-play GAP and ADMM iteration engines with schedules and diagnostics.

GAP alternates an exact Euclidean projection onto the measurement manifold
with a denoising step at noise level sigma_k = sqrt(lambda_k). ADMM solves its
quadratic subproblem in closed form through the diagonal Gram matrix and uses
sigma_k = sqrt(lambda / rho_k).
"""

import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .containers import Measurement, VideoCube
from .denoisers import make_denoiser
from .operators import adjoint, forward, project_onto_manifold

REPORT_COLUMNS = ("k", "lambda_or_rho", "sigma", "delta", "residual", "psnr", "ssim", "millis")


class SolverDivergedError(Exception):
    pass


class DenoiserFailedError(Exception):
    def __init__(self, iteration, cause):
        super().__init__(f"denoiser failed at iteration {iteration}: {cause}")
        self.iteration = iteration


@dataclass
class GapConfig:
    lambda0: float = 1.0
    xi: float = 0.9
    eta: float = 0.6
    schedule: str = "adaptive"  # monotone | adaptive
    max_iters: int = 60
    sigma_floor: float = 1.0 / 255.0
    init: object = "adjoint"  # "adjoint" | "zeros" | array/VideoCube
    delta_stop: Optional[float] = None  # optional early exit, extension beyond the fixed budget

    def __post_init__(self):
        if not (0 < self.xi < 1):
            raise ValueError("xi must lie in (0, 1)")
        if not (0 <= self.eta < 1):
            raise ValueError("eta must lie in [0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        if self.schedule not in ("monotone", "adaptive"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


@dataclass
class AdmmConfig:
    rho0: float = 0.01
    gamma: float = 1.05
    lambda_: float = 1.0
    max_iters: int = 60
    sigma_floor: float = 1.0 / 255.0
    init: object = "adjoint"

    def __post_init__(self):
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.lambda_ <= 0:
            raise ValueError("lambda must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class BoundedDenoiserSpec:
    denoiser: object
    c_bound: float

    def __post_init__(self):
        if self.c_bound <= 0:
            raise ValueError("C must be positive")


@dataclass
class RunReport:
    """Per-iteration diagnostics of one solver run."""

    rows: list = field(default_factory=list)
    contraction_ok: bool = True  # step norm never exceeded the pre-denoise gap

    def record(self, k, lambda_or_rho, sigma, delta, residual, psnr_db, ssim, millis):
        self.rows.append({"k": k, "lambda_or_rho": lambda_or_rho, "sigma": sigma,
                          "delta": delta, "residual": residual, "psnr": psnr_db,
                          "ssim": ssim, "millis": millis})

    def __len__(self):
        return len(self.rows)

    @staticmethod
    def _fmt(value):
        if value is None:
            return ""
        if isinstance(value, int):
            return str(value)
        if math.isinf(value):
            return "inf"
        return repr(float(value))

    def to_csv(self, path=None, include_timing=True):
        lines = [",".join(REPORT_COLUMNS)]
        for row in self.rows:
            vals = [row[c] for c in REPORT_COLUMNS]
            if not include_timing:
                vals[-1] = 0.0
            lines.append(",".join(self._fmt(v) for v in vals))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None, include_timing=True):
        rows = self.rows
        if not include_timing:
            rows = [{**r, "millis": 0.0} for r in rows]
        text = json.dumps({"columns": list(REPORT_COLUMNS), "rows": rows}, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def residual_delta(x_prev, x_next, v_prev, v_next):
    """Relative residue: scaled sum of the x-step and v-step Euclidean norms."""
    arrs = [np.asarray(a.data if isinstance(a, VideoCube) else a, dtype=np.float64)
            for a in (x_prev, x_next, v_prev, v_next)]
    if not (arrs[0].shape == arrs[1].shape == arrs[2].shape == arrs[3].shape):
        raise ValueError("all four cubes must share a shape")
    scale = 1.0 / math.sqrt(arrs[0].size)
    return scale * (np.linalg.norm(arrs[1] - arrs[0]) + np.linalg.norm(arrs[3] - arrs[2]))


def lambda_schedule_step(delta_prev, delta_next, lambda_k, cfg):
    """Monotone: always decay. Adaptive: decay only while progress has stalled."""
    if cfg.schedule == "monotone":
        return cfg.xi * lambda_k
    if delta_next >= cfg.eta * delta_prev:
        return cfg.xi * lambda_k
    return lambda_k


def _initial_v(cfg, y, op):
    init = cfg.init
    if isinstance(init, VideoCube):
        return init.data.copy()
    if isinstance(init, np.ndarray):
        return np.array(init, dtype=np.float64)
    if init == "zeros":
        return np.zeros(op.masks.shape)
    if init == "adjoint":
        rmax = op.r_diag.max()
        scale = 1.0 / rmax if rmax > 0 else 1.0
        return adjoint(y, op) * scale
    raise ValueError(f"unknown init {init!r}")


def _metrics_row(x, ground_truth):
    if ground_truth is None:
        return None, None
    from .metrics import video_metrics

    rep = video_metrics(ground_truth, np.clip(x, 0.0, 1.0), with_ssim=False)
    return rep.mean_psnr, None


def _check_finite(x, k):
    if not np.all(np.isfinite(x)):
        raise SolverDivergedError(f"non-finite iterate at iteration {k}")


def gap_solve(y, op, denoiser, cfg=None, ground_truth=None):
    """Plug-and-play generalized alternating projection.

    Returns the final denoised iterate, clipped to [0, 1], plus a RunReport.
    """
    cfg = cfg or GapConfig()
    den = make_denoiser(denoiser)
    yd = y.data if isinstance(y, Measurement) else np.asarray(y, dtype=np.float64)
    gt = ground_truth.data if isinstance(ground_truth, VideoCube) else ground_truth

    v = _initial_v(cfg, yd, op)
    x = v.copy()
    lam = cfg.lambda0
    delta_prev = None
    report = RunReport()
    for k in range(cfg.max_iters):
        t0 = time.perf_counter()
        sigma = max(math.sqrt(lam), cfg.sigma_floor)
        x_next = project_onto_manifold(v, yd, op)
        _check_finite(x_next, k)
        if k > 0:
            gap_norm = np.linalg.norm(v - x)
            step_norm = np.linalg.norm(x_next - x)
            if step_norm > gap_norm * (1.0 + 1e-9) + 1e-12:
                report.contraction_ok = False
        try:
            v_next = den(x_next, sigma, k)
        except Exception as exc:
            raise DenoiserFailedError(k, exc) from exc
        v_next = np.asarray(v_next, dtype=np.float64)
        _check_finite(v_next, k)
        delta = residual_delta(x, x_next, v, v_next)
        residual = np.linalg.norm(yd - forward(x_next, op))
        psnr_db, ssim_val = _metrics_row(v_next, gt)
        millis = (time.perf_counter() - t0) * 1000.0
        report.record(k, lam, sigma, delta, residual, psnr_db, ssim_val, millis)
        if delta_prev is not None:
            lam = lambda_schedule_step(delta_prev, delta, lam, cfg)
        else:
            lam = lambda_schedule_step(delta, delta, lam, cfg)  # first step always decays
        delta_prev = delta
        x, v = x_next, v_next
        if cfg.delta_stop is not None and delta < cfg.delta_stop:
            break
    return VideoCube(np.clip(v, 0.0, 1.0)), report


def admm_solve(y, op, denoiser, cfg=None, ground_truth=None):
    """Plug-and-play ADMM with the closed-form quadratic update.

    The x-update uses the matrix-inversion-lemma form through the diagonal
    Gram matrix: x = q - H^T[(rho + R)^-1 (Hq - y)] with q = v - u/rho.
    """
    cfg = cfg or AdmmConfig()
    den = make_denoiser(denoiser)
    yd = y.data if isinstance(y, Measurement) else np.asarray(y, dtype=np.float64)
    gt = ground_truth.data if isinstance(ground_truth, VideoCube) else ground_truth

    v = _initial_v(cfg, yd, op)
    u = np.zeros_like(v)
    x = v.copy()
    rho = cfg.rho0
    masks = op.masks.data
    report = RunReport()
    for k in range(cfg.max_iters):
        t0 = time.perf_counter()
        sigma = max(math.sqrt(cfg.lambda_ / rho), cfg.sigma_floor)
        q = v - u / rho
        hq = forward(q, op)
        x_next = q - masks * ((hq - yd) / (rho + op.r_diag))[:, :, None]
        _check_finite(x_next, k)
        try:
            v_next = den(x_next + u / rho, sigma, k)
        except Exception as exc:
            raise DenoiserFailedError(k, exc) from exc
        v_next = np.asarray(v_next, dtype=np.float64)
        _check_finite(v_next, k)
        u = u + rho * (x_next - v_next)
        delta = residual_delta(x, x_next, v, v_next)
        residual = np.linalg.norm(yd - forward(x_next, op))
        psnr_db, ssim_val = _metrics_row(v_next, gt)
        millis = (time.perf_counter() - t0) * 1000.0
        report.record(k, rho, sigma, delta, residual, psnr_db, ssim_val, millis)
        rho *= cfg.gamma
        x, v = x_next, v_next
    return VideoCube(np.clip(v, 0.0, 1.0)), report


def warm_start_sequence(measurements, op, denoiser, cfg, warmup=None):
    """Reconstruct an ordered measurement sequence, chaining initializations.

    `warmup` is an optional (denoiser, config) pair run only on the first
    measurement to produce its initialization; later measurements start from
    the previous reconstruction.
    """
    outputs = []
    reports = []
    init = None
    for idx, y in enumerate(measurements):
        run_cfg = _with_init(cfg, init) if init is not None else cfg
        if idx == 0 and warmup is not None:
            warm_den, warm_cfg = warmup
            try:
                warm_out, _ = gap_solve(y, op, warm_den, warm_cfg)
            except Exception as exc:
                raise RuntimeError(f"warmup failed for measurement {idx}: {exc}") from exc
            run_cfg = _with_init(cfg, warm_out.data)
        try:
            out, rep = gap_solve(y, op, denoiser, run_cfg)
        except Exception as exc:
            raise RuntimeError(f"reconstruction failed for measurement {idx}: {exc}") from exc
        outputs.append(out)
        reports.append(rep)
        init = out.data
    return outputs, reports


def _with_init(cfg, init_array):
    fields_ = dict(cfg.__dict__)
    fields_["init"] = np.asarray(init_array)
    return type(cfg)(**fields_)


def bounded_denoiser_check(denoiser, x, sigma, c_bound):
    """Measure the mean-squared perturbation of a denoiser against sigma^2 * C."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    den = make_denoiser(denoiser)
    xd = x.data if isinstance(x, VideoCube) else np.asarray(x, dtype=np.float64)
    out = den(xd, sigma, 0)
    ratio = float(np.sum((out - xd) ** 2) / (xd.size * sigma * sigma))
    return ratio <= c_bound, ratio
