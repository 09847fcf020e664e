"""Structured sensing operator for snapshot compressive imaging.

The operator multiplies each video frame by its mask and integrates over
frames, so as a matrix it is a concatenation of diagonal blocks and its Gram
matrix is diagonal. Everything here is matrix-free except `dense_operator`,
which materializes the matrix for oracle tests.
"""

import numpy as np

from .containers import MaskCube, Measurement, VideoCube

DENSE_GUARD = 10**6


def _cube(x):
    return x.data if isinstance(x, (VideoCube, MaskCube)) else np.asarray(x, dtype=np.float64)


def _frame(y):
    return y.data if isinstance(y, Measurement) else np.asarray(y, dtype=np.float64)


class SensingOperator:
    """Mask-modulated temporal-integration operator with cached diagonal Gram."""

    def __init__(self, masks):
        if not isinstance(masks, MaskCube):
            masks = MaskCube(masks)
        self.masks = masks
        self.r_diag = r_diagonal(masks)

    @property
    def shape(self):
        return self.masks.shape


def r_diagonal(masks):
    """Per-pixel sum over frames of the squared mask entries (the Gram diagonal)."""
    m = _cube(masks)
    return np.einsum("ijb,ijb->ij", m, m)


def forward(x, op):
    """Apply the sensing operator: per-frame Hadamard product summed over frames."""
    xd = _cube(x)
    m = op.masks.data
    if xd.shape != m.shape:
        raise ValueError(f"video shape {xd.shape} does not match mask shape {m.shape}")
    return np.einsum("ijb,ijb->ij", m, xd)


def adjoint(y, op):
    """Apply the transpose: replicate the snapshot into each frame times its mask."""
    yd = _frame(y)
    m = op.masks.data
    if yd.shape != m.shape[:2]:
        raise ValueError(f"measurement shape {yd.shape} does not match mask shape {m.shape}")
    return m * yd[:, :, None]


def project_onto_manifold(v, y, op):
    """Euclidean projection of v onto the affine set of videos consistent with y.

    Pixels that are masked out in every frame (zero Gram entry) are left
    unchanged; data consistency is only claimed where the Gram entry is
    positive.
    """
    vd = _cube(v)
    yd = _frame(y)
    m = op.masks.data
    if vd.shape != m.shape:
        raise ValueError(f"video shape {vd.shape} does not match mask shape {m.shape}")
    if yd.shape != m.shape[:2]:
        raise ValueError(f"measurement shape {yd.shape} does not match mask shape {m.shape}")
    residual = yd - np.einsum("ijb,ijb->ij", m, vd)
    r = op.r_diag
    scale = np.zeros_like(r)
    positive = r > 0
    scale[positive] = residual[positive] / r[positive]
    return vd + m * scale[:, :, None]


def gradient_f(x, y, op):
    """Gradient of the half squared measurement-residual loss."""
    return adjoint(forward(x, op) - _frame(y), op)


def dense_operator(op):
    """Materialize the sensing matrix of shape (n, n*B) for small oracle instances.

    Vectorization follows the container layout: frame index slowest, then
    row-major over pixels within a frame.
    """
    n_x, n_y, nb = op.masks.shape
    n = n_x * n_y
    if n * nb > DENSE_GUARD:
        raise ValueError(f"dense operator would hold {n * nb} entries (guard {DENSE_GUARD})")
    h = np.zeros((n, n * nb))
    for b in range(nb):
        h[:, b * n:(b + 1) * n] = np.diag(op.masks.data[:, :, b].ravel())
    return h


def vectorize(cube):
    """Flatten a video cube with the dense-operator convention (frame slowest)."""
    c = _cube(cube)
    return np.ascontiguousarray(c.transpose(2, 0, 1)).ravel()


def unvectorize(vec, shape):
    """Inverse of `vectorize` for a target (n_x, n_y, B) shape."""
    n_x, n_y, nb = shape
    return np.asarray(vec, dtype=np.float64).reshape(nb, n_x, n_y).transpose(1, 2, 0)
