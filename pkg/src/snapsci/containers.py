"""Dense array containers for snapshot compressive imaging and the SCI1 file format.

All cubes are stored internally as float64 with frame-contiguous payload order
(frame index slowest) when serialized; on disk the payload is float32 LE.
"""

import os
import struct

import numpy as np

MAGIC = b"SCI1"
VERSION = 1

KIND_VIDEO = 0
KIND_MASK = 1
KIND_MEASUREMENT = 2
KIND_COLOR = 3
KIND_BAYER = 4

PATTERN_RGGB = 0
PATTERN_NA = 255

_HEADER = struct.Struct("<4sBBBB4IQ")  # magic, version, kind, pattern, reserved, dims[4], payload elements


class ContainerError(Exception):
    """Base class for SCI1 container failures."""


class BadMagicError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


class NonFiniteDataError(ContainerError):
    pass


def _check_finite(data, name):
    if not np.all(np.isfinite(data)):
        raise NonFiniteDataError(f"{name} contains non-finite entries")


class VideoCube:
    """Grayscale video stack of shape (n_x, n_y, B), intensities nominally in [0,1].

    Intermediate solver states may exceed [0,1]; only finiteness is enforced here.
    """

    kind = KIND_VIDEO

    def __init__(self, data):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"VideoCube expects a 3-D array, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ValueError("all dimensions must be >= 1")
        _check_finite(data, "VideoCube")
        data = data.copy()
        data.flags.writeable = False
        self.data = data

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_frames(self):
        return self.data.shape[2]

    def __eq__(self, other):
        return isinstance(other, type(self)) and np.array_equal(self.data, other.data)


class MaskCube:
    """Sensing masks of shape (n_x, n_y, B); entries in [0, 1] after normalization."""

    kind = KIND_MASK

    def __init__(self, data):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"MaskCube expects a 3-D array, got shape {data.shape}")
        _check_finite(data, "MaskCube")
        if np.any(data < 0):
            raise ValueError("mask entries must be non-negative")
        if data.max(initial=0.0) > 1.0:
            raise ValueError("mask entries must be normalized to [0, 1]")
        data = data.copy()
        data.flags.writeable = False
        self.data = data

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, type(self)) and np.array_equal(self.data, other.data)


class Measurement:
    """A single coded 2-D snapshot of shape (n_x, n_y)."""

    kind = KIND_MEASUREMENT

    def __init__(self, data):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"Measurement expects a 2-D array, got shape {data.shape}")
        _check_finite(data, "Measurement")
        data = data.copy()
        data.flags.writeable = False
        self.data = data

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, type(self)) and np.array_equal(self.data, other.data)


class ColorVideoCube:
    """RGB video of shape (n_x, n_y, 3, B); channel axis ordered R, G, B.

    Spatial dims must be even so the cube tiles onto a 2x2 RGGB Bayer grid.
    """

    kind = KIND_COLOR

    def __init__(self, data):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 4 or data.shape[2] != 3:
            raise ValueError(f"ColorVideoCube expects shape (n_x, n_y, 3, B), got {data.shape}")
        if data.shape[0] % 2 or data.shape[1] % 2:
            raise ValueError("n_x and n_y must be even for Bayer tiling")
        _check_finite(data, "ColorVideoCube")
        if data.min(initial=0.0) < 0.0 or data.max(initial=0.0) > 1.0:
            raise ValueError("ColorVideoCube entries must lie in [0, 1]")
        data = data.copy()
        data.flags.writeable = False
        self.data = data

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_frames(self):
        return self.data.shape[3]

    def __eq__(self, other):
        return isinstance(other, type(self)) and np.array_equal(self.data, other.data)


class BayerVideo:
    """Mosaiced video of shape (n_x, n_y, B) on an RGGB grid."""

    kind = KIND_BAYER

    def __init__(self, data, pattern="RGGB"):
        if pattern != "RGGB":
            raise ValueError(f"unsupported Bayer pattern {pattern!r}")
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"BayerVideo expects a 3-D array, got shape {data.shape}")
        if data.shape[0] % 2 or data.shape[1] % 2:
            raise ValueError("n_x and n_y must be even")
        _check_finite(data, "BayerVideo")
        data = data.copy()
        data.flags.writeable = False
        self.data = data
        self.pattern = pattern

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        return (isinstance(other, type(self)) and self.pattern == other.pattern
                and np.array_equal(self.data, other.data))


_KIND_TO_CLS = {
    KIND_VIDEO: VideoCube,
    KIND_MASK: MaskCube,
    KIND_MEASUREMENT: Measurement,
    KIND_COLOR: ColorVideoCube,
    KIND_BAYER: BayerVideo,
}


def _payload_order(arr):
    """Flatten with frame index slowest, then channel, then rows, then columns."""
    if arr.ndim == 2:
        return np.ascontiguousarray(arr)
    if arr.ndim == 3:
        return np.ascontiguousarray(arr.transpose(2, 0, 1))
    if arr.ndim == 4:
        return np.ascontiguousarray(arr.transpose(3, 2, 0, 1))
    raise ValueError(f"unsupported rank {arr.ndim}")


def _payload_unorder(flat, dims, kind):
    n_x, n_y, c_or_b, b = dims
    if kind == KIND_MEASUREMENT:
        return flat.reshape(n_x, n_y)
    if kind == KIND_COLOR:
        return flat.reshape(b, c_or_b, n_x, n_y).transpose(2, 3, 1, 0)
    return flat.reshape(c_or_b, n_x, n_y).transpose(1, 2, 0)


def _dims_of(array):
    s = array.data.shape
    if array.kind == KIND_MEASUREMENT:
        return (s[0], s[1], 1, 1)
    if array.kind == KIND_COLOR:
        return (s[0], s[1], 3, s[3])
    return (s[0], s[1], s[2], 1)


def save_container(array, path):
    """Write a container array to `path` in the SCI1 format (deterministic bytes)."""
    pattern = PATTERN_RGGB if array.kind == KIND_BAYER else PATTERN_NA
    dims = _dims_of(array)
    payload = _payload_order(array.data).astype("<f4").tobytes()
    header = _HEADER.pack(MAGIC, VERSION, array.kind, pattern, 0, *dims, array.data.size)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise ContainerError(f"failed to write container {path!r}: {exc}") from exc


def load_container(path):
    """Load an SCI1 container, returning the matching container type."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ContainerError(f"failed to read container {path!r}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise TruncatedPayloadError(f"{path!r}: file shorter than the SCI1 header")
    magic, version, kind, pattern, _reserved, d0, d1, d2, d3, count = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagicError(f"{path!r}: bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"{path!r}: unsupported version {version}")
    if kind not in _KIND_TO_CLS:
        raise ContainerError(f"{path!r}: unknown kind {kind}")
    expected = d0 * d1 * d2 * d3
    if count != expected:
        raise ContainerError(f"{path!r}: payload length field {count} != dims product {expected}")
    body = blob[_HEADER.size:]
    if len(body) < 4 * count:
        raise TruncatedPayloadError(f"{path!r}: payload truncated ({len(body)} of {4 * count} bytes)")
    flat = np.frombuffer(body[:4 * count], dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(flat)):
        raise NonFiniteDataError(f"{path!r}: payload contains non-finite entries")
    data = _payload_unorder(flat, (d0, d1, d2, d3), kind)
    if kind == KIND_BAYER:
        if pattern != PATTERN_RGGB:
            raise ContainerError(f"{path!r}: unknown Bayer pattern code {pattern}")
        return BayerVideo(data)
    return _KIND_TO_CLS[kind](data)


def save_frames(array, directory, prefix="frame", fmt="png"):
    """Export a cube as an 8-bit lossless raster sequence, one file per frame."""
    from PIL import Image

    os.makedirs(directory, exist_ok=True)
    data = array.data
    n = data.shape[-1]
    width = max(4, len(str(n)))
    paths = []
    for b in range(n):
        if array.kind == KIND_COLOR:
            frame = data[:, :, :, b]
        else:
            frame = data[:, :, b]
        img = np.clip(np.round(frame * 255.0), 0, 255).astype(np.uint8)
        path = os.path.join(directory, f"{prefix}{b:0{width}d}.{fmt}")
        Image.fromarray(img).save(path)
        paths.append(path)
    return paths


def load_frames(paths, color=False):
    """Ingest an ordered raster image sequence, scaled by 1/255."""
    from PIL import Image

    frames = []
    for path in paths:
        img = Image.open(path)
        img = img.convert("RGB" if color else "L")
        frames.append(np.asarray(img, dtype=np.float64) / 255.0)
    stack = np.stack(frames, axis=-1)
    if color:
        return ColorVideoCube(stack)
    return VideoCube(stack)
