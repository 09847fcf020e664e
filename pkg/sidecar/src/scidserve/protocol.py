"""SCID v1 wire protocol, server side.

Deliberately self-contained: the sidecar talks to clients only over this byte
format, never through a shared library, so it mirrors the client's framing
definitions here. One request per response, little-endian throughout; payload
is float32 with the frame index slowest.
"""

import struct

import numpy as np

MAGIC = b"SCID"
VERSION = 1
MSG_DENOISE = 1
MSG_OK = 2
MSG_ERROR = 255

HEADER = struct.Struct("<4sBBBB4IfQ")  # magic, version, msg, color, reserved, nx, ny, channels, B, sigma, payload elements

ERR_BAD_MAGIC = 1
ERR_TRUNCATED = 2
ERR_BAD_HEADER = 3
ERR_MODEL_FAILURE = 4


class BadMagic(Exception):
    pass


class Truncated(Exception):
    pass


class BadHeader(Exception):
    pass


def pack_array(arr, color):
    a = np.asarray(arr, dtype=np.float64)
    if color:
        flat = np.ascontiguousarray(a.transpose(3, 2, 0, 1))
    elif a.ndim == 3:
        flat = np.ascontiguousarray(a.transpose(2, 0, 1))
    else:
        flat = np.ascontiguousarray(a)
    return flat.astype("<f4").tobytes()


def unpack_array(payload, nx, ny, channels, nb, color):
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if color:
        return flat.reshape(nb, channels, nx, ny).transpose(2, 3, 1, 0)
    return flat.reshape(nb, nx, ny).transpose(1, 2, 0)


def encode_ok(arr, sigma, color):
    a = np.asarray(arr)
    if color:
        nx, ny, channels, nb = a.shape
    else:
        nx, ny, nb = a.shape
        channels = 1
    header = HEADER.pack(MAGIC, VERSION, MSG_OK, 1 if color else 0, 0,
                         nx, ny, channels, nb, float(sigma), a.size)
    return header + pack_array(a, color)


def encode_error(code, message):
    body = message.encode("utf-8")
    return (HEADER.pack(MAGIC, VERSION, MSG_ERROR, 0, 0, 0, 0, 0, 0, 0.0, 0)
            + struct.pack("<II", code, len(body)) + body)


def _read_exact(read, n):
    chunks = []
    remaining = n
    while remaining:
        chunk = read(remaining)
        if not chunk:
            raise Truncated(f"stream ended with {remaining} bytes outstanding")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_request(read):
    """Read one denoise request.

    Returns (array, sigma, color) or None on clean end-of-stream. Raises
    BadMagic / Truncated / BadHeader on malformed traffic.
    """
    first = read(HEADER.size)
    if not first:
        return None
    raw = first if len(first) == HEADER.size \
        else first + _read_exact(read, HEADER.size - len(first))
    magic, version, msg, color, _res, nx, ny, channels, nb, sigma, count = \
        HEADER.unpack(raw)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION or msg != MSG_DENOISE:
        raise BadHeader(f"unsupported version/message {version}/{msg}")
    want = nx * ny * channels * nb
    if count != want or (color and channels != 3) or (not color and channels != 1):
        raise BadHeader(f"inconsistent dims {nx}x{ny}x{channels}x{nb} for {count} elements")
    payload = _read_exact(read, 4 * count)
    return unpack_array(payload, nx, ny, channels, nb, bool(color)), sigma, bool(color)
