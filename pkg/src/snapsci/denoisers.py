"""Plug-in denoisers: identity/clip, total-variation proximals, and the SCID
bridge client for external deep denoisers.

Every denoiser maps an array to a same-shape array, finite and clipped to
[0, 1]. The solver hands over a noise level sigma; TV denoisers translate it
to a regularization weight via `weight = weight_scale * sigma**2`.
"""

import select
import shlex
import socket
import subprocess
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import scid
from .containers import ColorVideoCube, VideoCube


class BridgeError(Exception):
    """External denoiser bridge failure; carries endpoint diagnostics."""


class BridgeTimeoutError(BridgeError):
    pass


class BridgeDimsError(BridgeError):
    pass


class BridgeNonFiniteError(BridgeError):
    pass


def _as_array(x):
    if isinstance(x, (VideoCube, ColorVideoCube)):
        return x.data
    return np.asarray(x, dtype=np.float64)


def tv_denoise_frame(frame, weight, iters=5):
    """Approximate the 2-D isotropic TV proximal via dual projection iterations."""
    return _tv_chambolle(np.asarray(frame, dtype=np.float64), weight, iters, (1.0, 1.0))


def tv_denoise_volume(cube, weight, iters=5, axis_weights=(1.0, 1.0, 1.0)):
    """Weighted isotropic TV proximal over the (x, y, t) axes of a video cube."""
    return _tv_chambolle(_as_array(cube), weight, iters, tuple(axis_weights))


def _tv_chambolle(f, weight, iters, axis_weights):
    """Dual (projection-type) iterations for min 1/2||u-f||^2 + weight*TV_iso(u).

    Axes with zero weight are excluded from the gradient, so a 3-D call with
    axis_weights (1, 1, 0) decouples into independent 2-D problems per frame.
    """
    if weight <= 0:
        return f.copy()
    axes = [(ax, w) for ax, w in zip(range(f.ndim), axis_weights) if w > 0]
    if not axes:
        return f.copy()
    nax = len(axes)
    wmax = max(w for _, w in axes)
    tau = 1.0 / (2.0 * nax * max(1.0, wmax * wmax))
    p = np.zeros((nax,) + f.shape)
    g = np.zeros_like(p)

    def weighted_divergence(p):
        d = np.zeros(f.shape)
        for i, (ax, w) in enumerate(axes):
            sl_hi = [slice(None)] * f.ndim
            sl_lo = [slice(None)] * f.ndim
            sl_hi[ax] = slice(1, None)
            sl_lo[ax] = slice(0, -1)
            d -= w * p[i]
            d[tuple(sl_hi)] += w * p[i][tuple(sl_lo)]
        return d

    out = f
    for it in range(iters):
        if it > 0:
            out = f + weighted_divergence(p)
        for i, (ax, w) in enumerate(axes):
            sl = [slice(None)] * f.ndim
            sl[ax] = slice(0, -1)
            g[i].fill(0.0)
            g[(i,) + tuple(sl)] = w * np.diff(out, axis=ax)
        norm = np.sqrt(np.sum(g * g, axis=0))[None, ...]
        p = (p - tau * g) / (1.0 + (tau / weight) * norm)
    return f + weighted_divergence(p)


def tv_objective(u, f, weight, axis_weights=None):
    """Direct evaluation of 1/2||u-f||^2 + weight*TV_iso(u) for tests/diagnostics."""
    u = np.asarray(u, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if axis_weights is None:
        axis_weights = (1.0,) * u.ndim
    sq = np.zeros(u.shape)
    for ax, w in zip(range(u.ndim), axis_weights):
        if w <= 0:
            continue
        diff = np.zeros(u.shape)
        sl = [slice(None)] * u.ndim
        sl[ax] = slice(0, -1)
        diff[tuple(sl)] = np.diff(u, axis=ax)
        sq += (w * diff) ** 2
    return 0.5 * np.sum((u - f) ** 2) + weight * np.sum(np.sqrt(sq))


@dataclass
class DenoiserBinding:
    """Declarative denoiser selection shared by solvers, CLI and config files."""

    kind: str = "tv3d"  # identity | clip | tv2d | tv3d | external | hybrid
    weight_scale: float = 0.8
    tv_iters: int = 5
    axis_weights: tuple = (1.0, 1.0, 1.0)
    endpoint: Optional[str] = None
    color: bool = False
    timeout_ms: int = 30000
    switch_at: Optional[int] = None
    first: Optional["DenoiserBinding"] = None
    second: Optional["DenoiserBinding"] = None

    def __post_init__(self):
        kinds = {"identity", "clip", "tv2d", "tv3d", "external", "hybrid"}
        if self.kind not in kinds:
            raise ValueError(f"unknown denoiser kind {self.kind!r}")
        if self.tv_iters < 1:
            raise ValueError("tv_iters must be >= 1")
        if self.kind == "external" and not self.endpoint:
            raise ValueError("external binding requires an endpoint")
        if self.kind == "hybrid" and (self.first is None or self.second is None
                                      or self.switch_at is None):
            raise ValueError("hybrid binding requires `first`, `second` and `switch_at`")


class Denoiser:
    """Callable denoiser: (array, sigma, iteration) -> same-shape array in [0, 1]."""

    def __init__(self, binding):
        self.binding = binding
        self._bridge = None
        if binding.kind == "hybrid":
            self._first = Denoiser(binding.first)
            self._second = Denoiser(binding.second)

    def close(self):
        if self._bridge is not None:
            self._bridge.close()
            self._bridge = None
        if self.binding.kind == "hybrid":
            self._first.close()
            self._second.close()

    def __call__(self, x, sigma, k=0):
        b = self.binding
        xd = _as_array(x)
        if b.kind == "hybrid":
            active = self._first if k < b.switch_at else self._second
            return active(xd, sigma, k)
        if b.kind == "identity" or b.kind == "clip":
            out = xd
        elif b.kind == "tv2d":
            weight = b.weight_scale * sigma * sigma
            out = _framewise(xd, lambda fr: tv_denoise_frame(fr, weight, b.tv_iters),
                             color=b.color)
        elif b.kind == "tv3d":
            weight = b.weight_scale * sigma * sigma
            if b.color:
                out = np.stack([tv_denoise_volume(xd[:, :, c, :], weight, b.tv_iters,
                                                  b.axis_weights)
                                for c in range(xd.shape[2])], axis=2)
            else:
                out = tv_denoise_volume(xd, weight, b.tv_iters, b.axis_weights)
        elif b.kind == "external":
            if self._bridge is None:
                self._bridge = open_bridge(b.endpoint)
            out = _bridge_denoise(self._bridge, b.endpoint, xd, sigma, b.color,
                                  b.timeout_ms)
        else:  # pragma: no cover - guarded by binding validation
            raise ValueError(b.kind)
        return np.clip(out, 0.0, 1.0)


def _framewise(xd, fn, color=False):
    if color:
        nb = xd.shape[3]
        return np.stack([np.stack([fn(xd[:, :, c, t]) for c in range(xd.shape[2])],
                                  axis=2) for t in range(nb)], axis=3)
    return np.stack([fn(xd[:, :, t]) for t in range(xd.shape[2])], axis=2)


def make_denoiser(binding_or_callable):
    """Accept a DenoiserBinding or a bare callable (x, sigma) -> x'."""
    if isinstance(binding_or_callable, DenoiserBinding):
        return Denoiser(binding_or_callable)
    if isinstance(binding_or_callable, Denoiser):
        return binding_or_callable
    fn = binding_or_callable

    def wrapped(x, sigma, k=0):
        return np.asarray(fn(_as_array(x), sigma), dtype=np.float64)

    return wrapped


def denoise(binding, x, sigma):
    """One-shot denoise through a binding; returns an array of the input's shape."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return Denoiser(binding)(x, sigma)


# --- SCID bridge client ---------------------------------------------------


class _TcpBridge:
    def __init__(self, host, port):
        self.sock = socket.create_connection((host, port), timeout=30.0)

    def request(self, payload, timeout_ms):
        self.sock.settimeout(timeout_ms / 1000.0)
        try:
            self.sock.sendall(payload)
            return scid.read_message(self.sock.recv)
        except socket.timeout as exc:
            raise TimeoutError from exc

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class _StdioBridge:
    def __init__(self, command):
        self.proc = subprocess.Popen(shlex.split(command), stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE)

    def request(self, payload, timeout_ms):
        deadline = time.monotonic() + timeout_ms / 1000.0
        self.proc.stdin.write(payload)
        self.proc.stdin.flush()
        fd = self.proc.stdout

        def timed_read(n):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise TimeoutError
            return fd.read1(n)

        return scid.read_message(timed_read)

    def close(self):
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self.proc.terminate()
        self.proc.wait(timeout=5)


def open_bridge(endpoint):
    """`host:port` (or `tcp:host:port`) opens TCP; anything else is run as a
    stdio subprocess command line."""
    if endpoint.startswith("tcp:"):
        host, port = endpoint[4:].rsplit(":", 1)
        return _TcpBridge(host, int(port))
    parts = endpoint.rsplit(":", 1)
    if len(parts) == 2 and parts[1].isdigit() and " " not in endpoint:
        return _TcpBridge(parts[0], int(parts[1]))
    return _StdioBridge(endpoint)


def _bridge_denoise(bridge, endpoint, xd, sigma, color, timeout_ms):
    request = scid.encode_request(xd, sigma, color)
    try:
        msg, fields, payload = bridge.request(request, timeout_ms)
    except TimeoutError as exc:
        raise BridgeTimeoutError(f"{endpoint}: no response within {timeout_ms} ms") from exc
    except (scid.ProtocolError, scid.RemoteError, OSError) as exc:
        raise BridgeError(f"{endpoint}: {exc}") from exc
    if color:
        dims = (fields["nx"], fields["ny"], fields["channels"], fields["nb"])
        want = xd.shape
    else:
        dims = (fields["nx"], fields["ny"], fields["nb"])
        want = xd.shape
    if msg != scid.MSG_OK or dims != want or bool(fields["color"]) != bool(color):
        raise BridgeDimsError(f"{endpoint}: protocol: dims mismatch (got {dims}, want {want})")
    out = scid.unpack_array(payload, fields["nx"], fields["ny"], fields["channels"],
                            fields["nb"], color)
    if not np.all(np.isfinite(out)):
        raise BridgeNonFiniteError(f"{endpoint}: response payload contains non-finite values")
    return out


def external_denoise(endpoint, x, sigma, color=False, timeout_ms=30000):
    """One request through a fresh bridge connection; closes it afterwards."""
    bridge = open_bridge(endpoint)
    try:
        return _bridge_denoise(bridge, endpoint, _as_array(x), sigma, color, timeout_ms)
    finally:
        bridge.close()
