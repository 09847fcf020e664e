"""Snapshot compressive imaging toolkit: coded-measurement simulation and
plug-and-play GAP/ADMM video reconstruction with pluggable denoisers."""

from .containers import (BayerVideo, ColorVideoCube, MaskCube, Measurement,
                         VideoCube, load_container, save_container)
from .denoisers import DenoiserBinding, denoise, tv_denoise_frame, tv_denoise_volume
from .estimators import ColorSciReconstructor, SciReconstructor
from .metrics import psnr, ssim, video_metrics
from .operators import (SensingOperator, adjoint, dense_operator, forward,
                        gradient_f, project_onto_manifold, r_diagonal)
from .simulate import MaskSpec, generate_masks, make_synthetic_video, simulate_measurement
from .solvers import (AdmmConfig, GapConfig, RunReport, admm_solve,
                      bounded_denoiser_check, gap_solve, lambda_schedule_step,
                      residual_delta, warm_start_sequence)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
