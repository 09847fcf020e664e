"""Estimator-style wrappers so reconstructions compose with scikit-learn
pipelines: `fit` binds the sensing setup, `transform`/`predict` reconstruct
measurements. Parameters follow the get_params/set_params convention.
"""

import inspect

import numpy as np

from .color import joint_color_solve
from .containers import MaskCube, Measurement
from .denoisers import DenoiserBinding
from .operators import SensingOperator
from .solvers import AdmmConfig, GapConfig, admm_solve, gap_solve


class ParamsMixin:
    """Minimal sklearn-compatible parameter handling."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [name for name in sig.parameters if name != "self"]

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(f"invalid parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def _check_measurement(y, masks):
    yd = y.data if isinstance(y, Measurement) else np.asarray(y, dtype=np.float64)
    if yd.ndim != 2:
        raise ValueError(f"expected a 2-D measurement, got shape {yd.shape}")
    if not np.all(np.isfinite(yd)):
        raise ValueError("measurement contains non-finite entries")
    if yd.shape != masks.shape[:2]:
        raise ValueError(f"measurement shape {yd.shape} does not match masks "
                         f"{masks.shape[:2]}")
    return yd


class SciReconstructor(ParamsMixin):
    """Grayscale video reconstruction from a single coded snapshot.

    fit(masks) binds the sensing masks; transform(y) maps measurements to
    reconstructed cubes; predict is an alias for single measurements.
    """

    def __init__(self, solver="gap", denoiser="tv3d", lambda0=1.0, xi=0.9, eta=0.6,
                 schedule="adaptive", max_iters=60, rho0=0.01, gamma=1.05,
                 weight_scale=0.8, tv_iters=5):
        self.solver = solver
        self.denoiser = denoiser
        self.lambda0 = lambda0
        self.xi = xi
        self.eta = eta
        self.schedule = schedule
        self.max_iters = max_iters
        self.rho0 = rho0
        self.gamma = gamma
        self.weight_scale = weight_scale
        self.tv_iters = tv_iters

    def _binding(self, color=False):
        if isinstance(self.denoiser, DenoiserBinding):
            return self.denoiser
        return DenoiserBinding(kind=self.denoiser, weight_scale=self.weight_scale,
                               tv_iters=self.tv_iters, color=color)

    def fit(self, masks, y=None):
        if not isinstance(masks, MaskCube):
            masks = MaskCube(masks)
        self.operator_ = SensingOperator(masks)
        return self

    def _solve(self, y):
        yd = _check_measurement(y, self.operator_.masks)
        if self.solver == "admm":
            cfg = AdmmConfig(rho0=self.rho0, gamma=self.gamma, lambda_=self.lambda0,
                             max_iters=self.max_iters)
            out, report = admm_solve(yd, self.operator_, self._binding(), cfg)
        elif self.solver == "gap":
            cfg = GapConfig(lambda0=self.lambda0, xi=self.xi, eta=self.eta,
                            schedule=self.schedule, max_iters=self.max_iters)
            out, report = gap_solve(yd, self.operator_, self._binding(), cfg)
        else:
            raise ValueError(f"unknown solver {self.solver!r}")
        self.report_ = report
        return out

    def transform(self, measurements):
        self._check_fitted()
        if isinstance(measurements, (Measurement, np.ndarray)):
            measurements = [measurements]
        return [self._solve(y) for y in measurements]

    def predict(self, y):
        self._check_fitted()
        return self._solve(y)

    def _check_fitted(self):
        if not hasattr(self, "operator_"):
            raise RuntimeError("call fit(masks) before reconstructing")


class ColorSciReconstructor(ParamsMixin):
    """Joint reconstruction and demosaicing from a Bayer-grid snapshot."""

    def __init__(self, demosaicer="malvar", mode="per_iteration", denoiser="tv3d",
                 lambda0=1.0, xi=0.9, eta=0.6, schedule="adaptive", max_iters=60,
                 weight_scale=0.8, tv_iters=5):
        self.demosaicer = demosaicer
        self.mode = mode
        self.denoiser = denoiser
        self.lambda0 = lambda0
        self.xi = xi
        self.eta = eta
        self.schedule = schedule
        self.max_iters = max_iters
        self.weight_scale = weight_scale
        self.tv_iters = tv_iters

    def fit(self, masks, y=None):
        if not isinstance(masks, MaskCube):
            masks = MaskCube(masks)
        self.operator_ = SensingOperator(masks)
        return self

    def predict(self, y):
        if not hasattr(self, "operator_"):
            raise RuntimeError("call fit(masks) before reconstructing")
        yd = _check_measurement(y, self.operator_.masks)
        binding = (self.denoiser if isinstance(self.denoiser, DenoiserBinding)
                   else DenoiserBinding(kind=self.denoiser, color=True,
                                        weight_scale=self.weight_scale,
                                        tv_iters=self.tv_iters))
        cfg = GapConfig(lambda0=self.lambda0, xi=self.xi, eta=self.eta,
                        schedule=self.schedule, max_iters=self.max_iters)
        out, report = joint_color_solve(yd, self.operator_, self.demosaicer,
                                        binding, cfg, self.mode)
        self.report_ = report
        return out

    transform = predict
