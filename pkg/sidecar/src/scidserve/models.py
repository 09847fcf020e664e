"""Denoiser models served over SCID.

`identity` and `gaussian` are pure-array reference models requiring no
weights, so the bridge is exercisable in CI without downloads. The neural
wrappers (`ffdnet_gray`, `ffdnet_color`, `fastdvdnet`) load a TorchScript
module lazily and follow the public pretrained models' documented input
conventions: inputs in [0, 1], a constant noise map at the request sigma,
frame-wise inference for the FFDNet variants and a sliding temporal window
(edge-replicated) for FastDVDnet.

Every model maps (array, sigma, color) -> same-shape array, finite and
clipped to [0, 1].
"""

import numpy as np
from scipy.ndimage import gaussian_filter

NEURAL_MODELS = ("ffdnet_gray", "ffdnet_color", "fastdvdnet")
MODELS = ("identity", "gaussian") + NEURAL_MODELS


class ModelError(Exception):
    pass


class IdentityModel:
    """Echoes the payload; the loopback model for CI and conformance runs."""

    convention = "identity: payload echoed unchanged"

    def __call__(self, arr, sigma, color):
        return np.clip(arr, 0.0, 1.0)


class GaussianModel:
    """Frame-wise Gaussian smoothing with spatial width tied to the noise level."""

    convention = "gaussian: per-frame spatial filter, width 0.5 + 10*sigma (capped at 3)"

    def __call__(self, arr, sigma, color):
        width = min(3.0, 0.5 + 10.0 * max(0.0, sigma))

        def smooth(frame):
            return gaussian_filter(frame, sigma=width, mode="nearest")

        if color:
            out = np.stack([np.stack([smooth(arr[:, :, c, t])
                                      for c in range(arr.shape[2])], axis=2)
                            for t in range(arr.shape[3])], axis=3)
        else:
            out = np.stack([smooth(arr[:, :, t])
                            for t in range(arr.shape[2])], axis=2)
        return np.clip(out, 0.0, 1.0)


def window_indices(nb, window):
    """Per-frame sliding-window indices with edge replication.

    window_indices(4, 3) -> [[0,0,1], [0,1,2], [1,2,3], [2,3,3]]
    """
    half = window // 2
    return [[min(nb - 1, max(0, t + d)) for d in range(-half, half + 1)]
            for t in range(nb)]


class _TorchModel:
    def __init__(self, weights, device):
        try:
            import torch
        except ImportError as exc:  # pragma: no cover - torch is optional
            raise ModelError("neural models require torch") from exc
        self.torch = torch
        self.device = torch.device(device)
        try:
            self.net = torch.jit.load(weights, map_location=self.device).eval()
        except Exception as exc:
            raise ModelError(f"cannot load weights {weights!r}: {exc}") from exc

    def _infer(self, stacked, sigma):
        """Run the net on a (C, H, W) float stack plus a constant noise map."""
        torch = self.torch
        with torch.no_grad():
            x = torch.from_numpy(stacked[None].astype(np.float32)).to(self.device)
            noise = torch.full_like(x[:, :1], float(sigma))
            out = self.net(x, noise)
        return out.squeeze(0).cpu().numpy().astype(np.float64)


class FfdnetModel(_TorchModel):
    """Frame-wise image denoiser; gray runs 1-channel, color 3-channel."""

    def __init__(self, weights, device, color_net):
        super().__init__(weights, device)
        self.color_net = color_net
        self.convention = (f"ffdnet_{'color' if color_net else 'gray'}: per-frame "
                           "inference, input in [0,1], constant noise map = sigma")

    def __call__(self, arr, sigma, color):
        nb = arr.shape[3] if color else arr.shape[2]
        frames = []
        for t in range(nb):
            if self.color_net:
                frame = arr[:, :, :, t] if color \
                    else np.repeat(arr[:, :, t, None], 3, axis=2)
                out = self._infer(frame.transpose(2, 0, 1), sigma).transpose(1, 2, 0)
                frames.append(out if color else out.mean(axis=2))
            else:
                frame = arr[:, :, t].mean(axis=2) if color else arr[:, :, t]
                out = self._infer(frame[None], sigma)[0]
                frames.append(np.repeat(out[:, :, None], 3, axis=2) if color else out)
        axis = 3 if color else 2
        return np.clip(np.stack(frames, axis=axis), 0.0, 1.0)


class FastdvdnetModel(_TorchModel):
    """Temporal video denoiser over a sliding window of neighboring frames."""

    def __init__(self, weights, device, window):
        super().__init__(weights, device)
        self.window = window
        self.convention = (f"fastdvdnet: sliding window of {window} frames, "
                           "edge replication, constant noise map = sigma")

    def __call__(self, arr, sigma, color):
        nb = arr.shape[3] if color else arr.shape[2]
        frames = []
        for idx in window_indices(nb, self.window):
            if color:
                stacked = np.concatenate([arr[:, :, :, t].transpose(2, 0, 1)
                                          for t in idx], axis=0)
                out = self._infer(stacked, sigma)[:3].transpose(1, 2, 0)
            else:
                stacked = np.stack([arr[:, :, t] for t in idx], axis=0)
                out = self._infer(stacked, sigma)[0]
            frames.append(out)
        axis = 3 if color else 2
        return np.clip(np.stack(frames, axis=axis), 0.0, 1.0)


def build_model(name, weights=None, device="cpu", window=5):
    if name not in MODELS:
        raise ModelError(f"unknown model {name!r} (choose from {', '.join(MODELS)})")
    if name == "identity":
        return IdentityModel()
    if name == "gaussian":
        return GaussianModel()
    if not weights:
        raise ModelError(f"model {name!r} requires --weights")
    if name == "ffdnet_gray":
        return FfdnetModel(weights, device, color_net=False)
    if name == "ffdnet_color":
        return FfdnetModel(weights, device, color_net=True)
    return FastdvdnetModel(weights, device, window)
