"""Mask generation and coded-measurement simulation.

All randomness flows through numpy's PCG64 generator seeded from the spec, so
identical seeds reproduce masks, noise and synthetic scenes bit for bit.
"""

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .color import mosaic
from .containers import ColorVideoCube, MaskCube, Measurement, VideoCube
from .operators import SensingOperator, forward, r_diagonal


@dataclass
class MaskSpec:
    kind: str = "bernoulli"  # bernoulli | shifting
    shape: tuple = (64, 64, 8)
    p: float = 0.5
    shifts: Optional[Sequence[tuple]] = None  # shifting: per-frame (dx, dy) crops of the base mask
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("bernoulli", "shifting"):
            raise ValueError(f"unknown mask kind {self.kind!r} "
                             "(Gaussian-valued masks are unsupported)")
        if self.kind == "bernoulli" and not (0 < self.p <= 1):
            raise ValueError("p must lie in (0, 1]")
        if len(self.shape) != 3 or min(self.shape) < 1:
            raise ValueError("shape must be (n_x, n_y, B) with positive dims")


def generate_masks(spec):
    """Draw a binary mask cube per the spec; warns when a pixel is never sampled."""
    n_x, n_y, nb = spec.shape
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "bernoulli":
        cube = (rng.random((n_x, n_y, nb)) < spec.p).astype(np.float64)
    else:
        # Translating physical mask: one taller Bernoulli base, cropped at a
        # per-frame offset (default: 1 pixel down per frame).
        shifts = spec.shifts
        if shifts is None:
            shifts = [(b, 0) for b in range(nb)]
        if len(shifts) != nb:
            raise ValueError(f"need {nb} shifts, got {len(shifts)}")
        max_dx = max(s[0] for s in shifts)
        max_dy = max(s[1] for s in shifts)
        if min(min(s) for s in shifts) < 0:
            raise ValueError("shifts must be non-negative")
        base = (rng.random((n_x + max_dx, n_y + max_dy)) < spec.p).astype(np.float64)
        cube = np.empty((n_x, n_y, nb))
        for b, (dx, dy) in enumerate(shifts):
            if dx + n_x > base.shape[0] or dy + n_y > base.shape[1]:
                raise ValueError(f"shift {(dx, dy)} out of base-mask bounds")
            cube[:, :, b] = base[dx:dx + n_x, dy:dy + n_y]
    masks = MaskCube(cube)
    if np.any(r_diagonal(masks) == 0):
        warnings.warn("some pixels are masked out in every frame (zero Gram entry)",
                      RuntimeWarning)
    return masks


def simulate_measurement(x, masks, noise_sigma=0.0, seed=0):
    """Code a video through the masks; color input is mosaiced first (Bayer grid).

    Additive white Gaussian noise with the given standard deviation is drawn
    from the seeded generator; sigma 0 leaves the forward output untouched.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if isinstance(x, ColorVideoCube) or (not isinstance(x, VideoCube)
                                         and np.asarray(x).ndim == 4):
        x = mosaic(x if isinstance(x, ColorVideoCube) else ColorVideoCube(x))
    xd = x.data if hasattr(x, "data") else np.asarray(x, dtype=np.float64)
    op = masks if isinstance(masks, SensingOperator) else SensingOperator(masks)
    y = forward(xd, op)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        y = y + rng.normal(0.0, noise_sigma, size=y.shape)
    return Measurement(y)


def make_synthetic_video(kind, shape=(64, 64, 8), velocity=(1, 0), seed=0):
    """Deterministic moving scenes with per-frame motion for temporal tests."""
    if kind == "moving_square":
        return VideoCube(_moving_square(shape, velocity, seed))
    if kind == "moving_square_color":
        n_x, n_y, nb = shape
        if n_x % 2 or n_y % 2:
            raise ValueError("color scenes need even spatial dims")
        colors = (np.array([0.85, 0.25, 0.2]), np.array([0.2, 0.75, 0.3]))
        gray = _moving_square(shape, velocity, seed)
        square = gray > 0.5
        out = np.empty((n_x, n_y, 3, nb))
        for c in range(3):
            out[:, :, c, :] = np.where(square, colors[0][c], 0.15 + 0.1 * colors[1][c])
        # second, slower square in a different color for chroma structure
        gray2 = _moving_square(shape, (max(1, velocity[0] // 2 + 1), velocity[1]), seed + 1)
        square2 = gray2 > 0.5
        for c in range(3):
            out[:, :, c, :] = np.where(square2 & ~square, colors[1][c], out[:, :, c, :])
        return ColorVideoCube(np.clip(out, 0.0, 1.0))
    if kind == "pan_texture":
        n_x, n_y, nb = shape
        rng = np.random.default_rng(seed)
        from scipy.ndimage import gaussian_filter

        base = gaussian_filter(rng.random((n_x, n_y)), sigma=2.0, mode="wrap")
        lo, hi = base.min(), base.max()
        base = (base - lo) / (hi - lo)
        dx, dy = velocity
        frames = [np.roll(base, (b * dx, b * dy), axis=(0, 1)) for b in range(nb)]
        return VideoCube(np.stack(frames, axis=2))
    raise ValueError(f"unknown synthetic scene {kind!r}")


def _moving_square(shape, velocity, seed):
    n_x, n_y, nb = shape
    if min(n_x, n_y) < 8:
        raise ValueError("scene too small for a moving square")
    side = max(2, n_x // 4)
    x0, y0 = n_x // 8, n_y // 8
    dx, dy = velocity
    frames = np.full((n_x, n_y, nb), 0.2)
    for b in range(nb):
        top = (x0 + b * dx) % n_x
        left = (y0 + b * dy) % n_y
        rows = (np.arange(top, top + side)) % n_x
        cols = (np.arange(left, left + side)) % n_y
        frames[np.ix_(rows, cols, [b])] = 0.9
    return frames
