"""SCID v1 wire protocol: binary denoise request/response over stdio or TCP.

One request per response, little-endian throughout. The payload uses the
container layout (frame index slowest).
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


class ProtocolError(Exception):
    """Malformed or inconsistent SCID traffic."""


class BridgeTimeout(Exception):
    pass


class RemoteError(Exception):
    """The peer answered with an SCID error message."""

    def __init__(self, code, message):
        super().__init__(f"remote error {code}: {message}")
        self.code = code
        self.message = message


def pack_array(arr, color):
    """Flatten to float32 LE bytes with frame index slowest."""
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


def encode_request(arr, sigma, color):
    a = np.asarray(arr)
    if color:
        nx, ny, channels, nb = a.shape
    else:
        nx, ny, nb = a.shape
        channels = 1
    header = HEADER.pack(MAGIC, VERSION, MSG_DENOISE, 1 if color else 0, 0,
                         nx, ny, channels, nb, float(sigma), a.size)
    return header + pack_array(a, color)


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


def read_exact(read, n):
    """Read exactly n bytes via the callable `read`; raise on EOF."""
    chunks = []
    remaining = n
    while remaining:
        chunk = read(remaining)
        if not chunk:
            raise ProtocolError(f"stream ended with {remaining} bytes outstanding")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_message(read):
    """Read one SCID message; returns (msg, header fields, payload bytes)."""
    raw = read_exact(read, HEADER.size)
    magic, version, msg, color, _res, nx, ny, channels, nb, sigma, count = HEADER.unpack(raw)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported version {version}")
    if msg == MSG_ERROR:
        code, length = struct.unpack("<II", read_exact(read, 8))
        message = read_exact(read, length).decode("utf-8", errors="replace")
        raise RemoteError(code, message)
    payload = read_exact(read, 4 * count)
    fields = {"msg": msg, "color": bool(color), "nx": nx, "ny": ny,
              "channels": channels, "nb": nb, "sigma": sigma, "count": count}
    return msg, fields, payload
