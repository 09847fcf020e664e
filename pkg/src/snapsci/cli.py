"""Command-line interface: dataset simulation, reconstruction, compression-rate
sweeps, metric reports, and a bridge handshake check.

Every command is deterministic given its config and seeds; wall-clock timing
columns are emitted only with `--timing` so reruns are byte-identical.

Exit codes: 0 success, 1 numerical failure, 2 I/O or config error, 3 bridge error.
"""

import argparse
import glob
import json
import math
import os
import sys
import time
import warnings

import numpy as np

from . import containers
from .color import channelwise_color_solve, joint_color_solve
from .containers import (ColorVideoCube, ContainerError, MaskCube, Measurement,
                         VideoCube, load_container, save_container)
from .denoisers import BridgeError, DenoiserBinding, external_denoise
from .metrics import psnr, ssim, video_metrics
from .operators import SensingOperator
from .simulate import MaskSpec, generate_masks, make_synthetic_video, simulate_measurement
from .solvers import (AdmmConfig, GapConfig, SolverDivergedError, admm_solve,
                      gap_solve, warm_start_sequence)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2
EXIT_BRIDGE = 3


class ConfigError(Exception):
    pass


_TOP_KEYS = {
    "input", "input_color", "synthetic", "shape", "velocity", "mask", "mask_file",
    "solver", "denoiser", "color_mode", "demosaicer", "gap", "admm", "b",
    "b_list", "seed", "noise_sigma", "warm_start", "out", "timing",
}
_MASK_KEYS = {"kind", "p", "shifts", "seed"}
_DENOISER_KEYS = {"kind", "weight_scale", "tv_iters", "axis_weights", "endpoint",
                  "color", "timeout_ms"}
_GAP_KEYS = {"lambda0", "xi", "eta", "schedule", "max_iters", "sigma_floor"}
_ADMM_KEYS = {"rho0", "gamma", "lambda", "max_iters", "sigma_floor"}


def _reject_unknown(mapping, allowed, context):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {context} keys: {sorted(unknown)}")


def load_config(path, overrides=None):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    _reject_unknown(cfg, _TOP_KEYS, "config")
    for sub, keys in (("mask", _MASK_KEYS), ("denoiser", _DENOISER_KEYS),
                      ("gap", _GAP_KEYS), ("admm", _ADMM_KEYS)):
        if isinstance(cfg.get(sub), dict):
            _reject_unknown(cfg[sub], keys, sub)
    return cfg


def _denoiser_from_config(cfg):
    spec = cfg.get("denoiser", "tv3d")
    if isinstance(spec, str):
        spec = {"kind": spec}
    fields = dict(spec)
    if "axis_weights" in fields:
        fields["axis_weights"] = tuple(fields["axis_weights"])
    color_mode = cfg.get("color_mode", "gray")
    if color_mode in ("joint_periter", "joint_halfres"):
        fields.setdefault("color", True)
    return DenoiserBinding(**fields)


def _gap_config(cfg):
    params = dict(cfg.get("gap", {}))
    return GapConfig(**params)


def _admm_config(cfg):
    params = dict(cfg.get("admm", {}))
    if "lambda" in params:
        params["lambda_"] = params.pop("lambda")
    return AdmmConfig(**params)


def _load_input_video(cfg):
    if "synthetic" in cfg:
        shape = tuple(cfg.get("shape", [64, 64, 8]))
        velocity = tuple(cfg.get("velocity", [1, 0]))
        return make_synthetic_video(cfg["synthetic"], shape, velocity,
                                    seed=cfg.get("seed", 0))
    path = cfg.get("input")
    if path is None:
        raise ConfigError("config needs `input` or `synthetic`")
    if os.path.isdir(path):
        frames = sorted(glob.glob(os.path.join(path, "*")))
        if not frames:
            raise ConfigError(f"no frames found in {path!r}")
        return containers.load_frames(frames, color=bool(cfg.get("input_color", False)))
    return load_container(path)


def _mask_spec(cfg, shape, b):
    mask = dict(cfg.get("mask", {}))
    shifts = mask.get("shifts")
    return MaskSpec(kind=mask.get("kind", "bernoulli"),
                    shape=(shape[0], shape[1], b),
                    p=mask.get("p", 0.5),
                    shifts=[tuple(s) for s in shifts] if shifts else None,
                    seed=mask.get("seed", cfg.get("seed", 0)))


def cmd_simulate(cfg, out_dir):
    video = _load_input_video(cfg)
    color = isinstance(video, ColorVideoCube)
    b = int(cfg.get("b", 8))
    n_frames = video.data.shape[-1]
    n_meas = n_frames // b
    if n_meas < 1:
        raise ConfigError(f"input has {n_frames} frames, fewer than B={b}")
    dropped = n_frames - n_meas * b
    if dropped:
        warnings.warn(f"{dropped} frame{'s' if dropped != 1 else ''} dropped "
                      f"(frame count not divisible by B={b})", RuntimeWarning)
    os.makedirs(out_dir, exist_ok=True)
    masks = generate_masks(_mask_spec(cfg, video.data.shape, b))
    save_container(masks, os.path.join(out_dir, "masks.sci1"))
    noise_sigma = float(cfg.get("noise_sigma", 0.0))
    seed = int(cfg.get("seed", 0))
    entries = []
    for t in range(n_meas):
        sl = slice(t * b, (t + 1) * b)
        if color:
            truth = ColorVideoCube(video.data[:, :, :, sl])
        else:
            truth = VideoCube(video.data[:, :, sl])
        y = simulate_measurement(truth, masks, noise_sigma, seed=seed + t)
        truth_path = os.path.join(out_dir, f"truth_{t:04d}.sci1")
        meas_path = os.path.join(out_dir, f"meas_{t:04d}.sci1")
        save_container(truth, truth_path)
        save_container(y, meas_path)
        entries.append({"index": t, "truth": os.path.basename(truth_path),
                        "measurement": os.path.basename(meas_path),
                        "noise_seed": seed + t})
    manifest = {"b": b, "color": color, "noise_sigma": noise_sigma, "seed": seed,
                "mask": dict(cfg.get("mask", {})), "frames_dropped": dropped,
                "measurements": entries, "config": cfg}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return n_meas


def _fmt_metric(value):
    if value is None:
        return ""
    if math.isinf(value):
        return "inf"
    return f"{value:.6f}"


def cmd_reconstruct(cfg, data_dir, out_dir, timing=False):
    mask_path = os.path.join(data_dir, "masks.sci1")
    if not os.path.exists(mask_path):
        raise ConfigError(f"missing mask file: {mask_path}")
    masks = load_container(mask_path)
    if not isinstance(masks, MaskCube):
        raise ConfigError(f"{mask_path} does not hold a mask cube")
    op = SensingOperator(masks)
    meas_paths = sorted(glob.glob(os.path.join(data_dir, "meas_*.sci1")))
    if not meas_paths:
        raise ConfigError(f"no measurements found in {data_dir!r}")
    measurements = [load_container(p) for p in meas_paths]
    for idx, y in enumerate(measurements):
        if y.data.shape != masks.data.shape[:2]:
            raise ConfigError(f"measurement {idx} shape {y.data.shape} does not "
                              f"match mask shape {masks.data.shape[:2]}")
    truths = []
    for p in meas_paths:
        tp = p.replace("meas_", "truth_")
        truths.append(load_container(tp) if os.path.exists(tp) else None)

    os.makedirs(out_dir, exist_ok=True)
    solver = cfg.get("solver", "gap")
    color_mode = cfg.get("color_mode", "gray")
    binding = _denoiser_from_config(cfg)
    gap_cfg = _gap_config(cfg)
    summary_rows = []
    outputs = []

    if cfg.get("warm_start") and color_mode == "gray" and solver == "gap":
        warm = (DenoiserBinding(kind="tv3d"), GapConfig(max_iters=10))
        outputs, reports = warm_start_sequence(measurements, op, binding, gap_cfg,
                                               warmup=warm)
        reports = list(reports)
    else:
        reports = []
        for idx, y in enumerate(measurements):
            gt = truths[idx] if isinstance(truths[idx], VideoCube) else None
            if color_mode == "gray":
                if solver == "admm":
                    out, rep = admm_solve(y, op, binding, _admm_config(cfg), gt)
                else:
                    out, rep = gap_solve(y, op, binding, gap_cfg, gt)
            elif color_mode == "channelwise":
                out = channelwise_color_solve(y, masks, binding, gap_cfg)
                rep = None
            elif color_mode in ("joint_periter", "joint_halfres"):
                mode = "per_iteration" if color_mode == "joint_periter" else "halfres_proxy"
                gt_c = truths[idx] if isinstance(truths[idx], ColorVideoCube) else None
                out, rep = joint_color_solve(y, masks, cfg.get("demosaicer", "malvar"),
                                             binding, gap_cfg, mode, gt_c)
            else:
                raise ConfigError(f"unknown color_mode {color_mode!r}")
            outputs.append(out)
            reports.append(rep)

    for idx, out in enumerate(outputs):
        save_container(out, os.path.join(out_dir, f"recon_{idx:04d}.sci1"))
        if reports[idx] is not None:
            reports[idx].to_csv(os.path.join(out_dir, f"report_{idx:04d}.csv"),
                                include_timing=timing)
            reports[idx].to_json(os.path.join(out_dir, f"report_{idx:04d}.json"),
                                 include_timing=timing)
        row = {"index": idx, "psnr": None, "ssim": None}
        if truths[idx] is not None and truths[idx].data.shape == out.data.shape:
            rep = video_metrics(truths[idx], out)
            row["psnr"] = rep.mean_psnr
            row["ssim"] = rep.mean_ssim
        summary_rows.append(row)

    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write("index,psnr,ssim\n")
        for row in summary_rows:
            fh.write(f"{row['index']},{_fmt_metric(row['psnr'])},"
                     f"{_fmt_metric(row['ssim'])}\n")
    return summary_rows


def cmd_sweep_b(cfg, out_dir, timing=False):
    b_list = cfg.get("b_list")
    if not b_list:
        raise ConfigError("sweep-b needs `b_list`")
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for b in b_list:
        if b < 1:
            raise ConfigError("B values must be >= 1")
        sub_cfg = dict(cfg)
        sub_cfg["b"] = int(b)
        sub_cfg.pop("b_list", None)
        if "synthetic" in sub_cfg:
            # resize the synthetic scene so each stage codes exactly B frames
            shape = list(sub_cfg.get("shape", (64, 64, 8)))
            shape[2] = int(b)
            sub_cfg["shape"] = shape
        stage_dir = os.path.join(out_dir, f"b{b:03d}")
        t0 = time.perf_counter()
        cmd_simulate(sub_cfg, stage_dir)
        summary = cmd_reconstruct(sub_cfg, stage_dir, stage_dir, timing=timing)
        seconds = time.perf_counter() - t0
        psnrs = [r["psnr"] for r in summary if r["psnr"] is not None]
        ssims = [r["ssim"] for r in summary if r["ssim"] is not None]
        rows.append({"b": int(b),
                     "psnr": sum(psnrs) / len(psnrs) if psnrs else None,
                     "ssim": sum(ssims) / len(ssims) if ssims else None,
                     "seconds": seconds if timing else 0.0})
    with open(os.path.join(out_dir, "sweep.csv"), "w") as fh:
        fh.write("b,psnr,ssim,seconds\n")
        for row in rows:
            fh.write(f"{row['b']},{_fmt_metric(row['psnr'])},"
                     f"{_fmt_metric(row['ssim'])},{row['seconds']:.3f}\n")
    with open(os.path.join(out_dir, "sweep.json"), "w") as fh:
        json.dump(rows, fh, indent=2)
    return rows


def cmd_metrics(ref_path, test_path):
    ref = load_container(ref_path)
    test = load_container(test_path)
    rep = video_metrics(ref, test)
    print(f"convention: {rep.convention}")
    for b, (p, s) in enumerate(zip(rep.psnr_frames, rep.ssim_frames)):
        print(f"frame {b}: psnr={_fmt_metric(p)} ssim={_fmt_metric(s)}")
    print(f"mean: psnr={_fmt_metric(rep.mean_psnr)} ssim={_fmt_metric(rep.mean_ssim)}")


def cmd_serve_check(endpoint, timeout_ms=10000):
    probe = np.full((2, 2, 1), 0.5)
    out = external_denoise(endpoint, probe, sigma=0.0, color=False,
                           timeout_ms=timeout_ms)
    if out.shape != probe.shape:
        raise BridgeError(f"{endpoint}: handshake returned shape {out.shape}")
    print(f"bridge at {endpoint!r} answered a 2x2x1 denoise request")


def build_parser():
    parser = argparse.ArgumentParser(prog="snapsci",
                                     description="Snapshot compressive imaging toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--solver", choices=["gap", "admm"])
        p.add_argument("--denoiser")
        p.add_argument("--b", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--color-mode",
                       choices=["gray", "channelwise", "joint_periter", "joint_halfres"])
        p.add_argument("--warm-start", action="store_true", default=None)
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--timing", action="store_true",
                       help="record wall-clock columns (breaks byte-identical reruns)")

    p_sim = sub.add_parser("simulate", help="generate masks, measurements and truth cubes")
    add_common(p_sim)
    p_rec = sub.add_parser("reconstruct", help="reconstruct measurements in a dataset dir")
    add_common(p_rec)
    p_rec.add_argument("--data", help="dataset directory (defaults to --out)")
    p_swp = sub.add_parser("sweep-b", help="compression-rate sweep")
    add_common(p_swp)
    p_met = sub.add_parser("metrics", help="PSNR/SSIM between two containers")
    p_met.add_argument("ref")
    p_met.add_argument("test")
    p_chk = sub.add_parser("serve-check", help="SCID bridge handshake test")
    p_chk.add_argument("--endpoint", required=True)
    p_chk.add_argument("--timeout-ms", type=int, default=10000)
    return parser


def _overrides(args):
    mapping = {"solver": args.solver, "b": args.b, "seed": args.seed,
               "color_mode": args.color_mode, "warm_start": args.warm_start,
               "out": args.out}
    if args.denoiser:
        mapping["denoiser"] = args.denoiser
    return mapping


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "metrics":
            cmd_metrics(args.ref, args.test)
        elif args.command == "serve-check":
            cmd_serve_check(args.endpoint, args.timeout_ms)
        else:
            cfg = load_config(args.config, _overrides(args))
            out_dir = cfg.get("out")
            if not out_dir:
                raise ConfigError("config needs an `out` directory")
            timing = bool(args.timing or cfg.get("timing", False))
            if args.command == "simulate":
                n = cmd_simulate(cfg, out_dir)
                print(f"wrote {n} measurement(s) to {out_dir}")
            elif args.command == "reconstruct":
                data_dir = args.data or out_dir
                rows = cmd_reconstruct(cfg, data_dir, out_dir, timing=timing)
                for row in rows:
                    print(f"measurement {row['index']}: psnr={_fmt_metric(row['psnr'])} "
                          f"ssim={_fmt_metric(row['ssim'])}")
            elif args.command == "sweep-b":
                rows = cmd_sweep_b(cfg, out_dir, timing=timing)
                for row in rows:
                    print(f"B={row['b']}: psnr={_fmt_metric(row['psnr'])}")
    except (ConfigError, ContainerError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BridgeError as exc:
        print(f"bridge error: {exc}", file=sys.stderr)
        return EXIT_BRIDGE
    except SolverDivergedError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
