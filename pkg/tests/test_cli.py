import json
import os
import sys

import numpy as np
import pytest

from snapsci.cli import (ConfigError, cmd_reconstruct, cmd_simulate, load_config,
                         main)
from snapsci.containers import VideoCube, load_container, save_container

HELPERS = os.path.join(os.path.dirname(__file__), "helpers")


def write_config(path, cfg):
    with open(path, "w") as fh:
        json.dump(cfg, fh)
    return str(path)


def base_config(tmp_path, **extra):
    cfg = {
        "synthetic": "moving_square",
        "shape": [16, 16, 8],
        "velocity": [2, 1],
        "mask": {"kind": "bernoulli", "p": 0.5, "seed": 7},
        "seed": 3,
        "b": 4,
        "denoiser": {"kind": "tv3d"},
        "gap": {"max_iters": 5},
        "out": str(tmp_path / "out"),
    }
    cfg.update(extra)
    return write_config(tmp_path / "cfg.json", cfg)


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestConfig:
    def test_unknown_top_key(self, tmp_path):
        path = write_config(tmp_path / "c.json", {"solvr": "gap"})
        with pytest.raises(ConfigError, match="solvr"):
            load_config(path)

    def test_unknown_nested_key(self, tmp_path):
        path = write_config(tmp_path / "c.json", {"gap": {"iters": 3}})
        with pytest.raises(ConfigError, match="iters"):
            load_config(path)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_overrides_apply(self, tmp_path):
        path = write_config(tmp_path / "c.json", {"b": 4})
        cfg = load_config(path, {"b": 8, "seed": None})
        assert cfg["b"] == 8 and "seed" not in cfg


class TestSimulate:
    def test_sixteen_frames_b8(self, tmp_path):
        cfg_path = base_config(tmp_path, shape=[16, 16, 16], b=8)
        assert main(["simulate", "--config", cfg_path]) == 0
        out = tmp_path / "out"
        assert (out / "masks.sci1").exists()
        assert (out / "meas_0000.sci1").exists()
        assert (out / "meas_0001.sci1").exists()
        assert not (out / "meas_0002.sci1").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["b"] == 8
        assert manifest["frames_dropped"] == 0
        assert len(manifest["measurements"]) == 2

    def test_dropped_frame_warning(self, tmp_path):
        cfg = load_config(base_config(tmp_path, shape=[16, 16, 17], b=8))
        with pytest.warns(RuntimeWarning, match="1 frame dropped"):
            n = cmd_simulate(cfg, str(tmp_path / "out"))
        assert n == 2
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["frames_dropped"] == 1

    def test_manifest_enables_re_simulation(self, tmp_path):
        cfg_path = base_config(tmp_path)
        main(["simulate", "--config", cfg_path])
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        redo = tmp_path / "redo"
        cmd_simulate(manifest["config"], str(redo))
        for name in ("masks.sci1", "meas_0000.sci1", "truth_0000.sci1"):
            assert read_bytes(tmp_path / "out" / name) == read_bytes(redo / name)

    def test_too_few_frames(self, tmp_path):
        cfg_path = base_config(tmp_path, shape=[16, 16, 4], b=8)
        assert main(["simulate", "--config", cfg_path]) == 2


class TestReconstruct:
    def test_end_to_end_and_determinism(self, tmp_path):
        cfg_path = base_config(tmp_path)
        assert main(["simulate", "--config", cfg_path]) == 0
        assert main(["reconstruct", "--config", cfg_path]) == 0
        out = tmp_path / "out"
        first = {name: read_bytes(out / name)
                 for name in ("summary.csv", "recon_0000.sci1", "recon_0001.sci1",
                              "report_0000.csv", "report_0000.json")}
        assert main(["reconstruct", "--config", cfg_path]) == 0
        for name, blob in first.items():
            assert read_bytes(out / name) == blob, f"{name} changed between reruns"
        summary = (out / "summary.csv").read_text().strip().split("\n")
        assert summary[0] == "index,psnr,ssim"
        assert len(summary) == 3

    def test_beats_stored_initialization(self, tmp_path):
        from snapsci.metrics import video_metrics
        from snapsci.operators import SensingOperator, adjoint
        cfg_path = base_config(tmp_path, gap={"max_iters": 15})
        main(["simulate", "--config", cfg_path])
        main(["reconstruct", "--config", cfg_path])
        out = tmp_path / "out"
        masks = load_container(str(out / "masks.sci1"))
        op = SensingOperator(masks)
        truth = load_container(str(out / "truth_0000.sci1"))
        y = load_container(str(out / "meas_0000.sci1"))
        init = np.clip(adjoint(y.data, op) / op.r_diag.max(), 0.0, 1.0)
        init_psnr = video_metrics(truth, init, with_ssim=False).mean_psnr
        summary = (out / "summary.csv").read_text().strip().split("\n")
        psnr_0 = float(summary[1].split(",")[1])
        assert psnr_0 > init_psnr

    def test_missing_masks(self, tmp_path, capsys):
        cfg_path = base_config(tmp_path)
        os.makedirs(tmp_path / "out", exist_ok=True)
        assert main(["reconstruct", "--config", cfg_path]) == 2
        assert "masks.sci1" in capsys.readouterr().err

    def test_admm_and_warm_start_paths(self, tmp_path):
        cfg_path = base_config(tmp_path, solver="admm",
                               admm={"max_iters": 3})
        main(["simulate", "--config", cfg_path])
        assert main(["reconstruct", "--config", cfg_path]) == 0
        cfg_path2 = base_config(tmp_path, warm_start=True)
        assert main(["reconstruct", "--config", cfg_path2]) == 0

    def test_unknown_color_mode(self, tmp_path):
        cfg_path = base_config(tmp_path)
        main(["simulate", "--config", cfg_path])
        cfg = load_config(cfg_path)
        cfg["color_mode"] = "sepia"
        with pytest.raises(ConfigError):
            cmd_reconstruct(cfg, str(tmp_path / "out"), str(tmp_path / "out"))


class TestSweepB:
    def test_needs_b_list(self, tmp_path):
        cfg_path = base_config(tmp_path)
        assert main(["sweep-b", "--config", cfg_path]) == 2

    def test_constant_video_inf_row(self, tmp_path):
        const = VideoCube(np.full((16, 16, 2), 0.5))
        video_path = str(tmp_path / "const.sci1")
        save_container(const, video_path)
        cfg_path = write_config(tmp_path / "c.json", {
            "input": video_path,
            "b_list": [2],
            "mask": {"kind": "bernoulli", "p": 1.0, "seed": 0},
            "denoiser": "identity",
            "gap": {"max_iters": 5},
            "out": str(tmp_path / "sweep"),
        })
        assert main(["sweep-b", "--config", cfg_path]) == 0
        csv = (tmp_path / "sweep" / "sweep.csv").read_text().strip().split("\n")
        assert csv[0] == "b,psnr,ssim,seconds"
        assert csv[1].startswith("2,inf,")

    def test_rerun_reproduces_csv(self, tmp_path):
        cfg_path = base_config(tmp_path, b_list=[2, 4], gap={"max_iters": 3})
        assert main(["sweep-b", "--config", cfg_path]) == 0
        first = read_bytes(tmp_path / "out" / "sweep.csv")
        assert main(["sweep-b", "--config", cfg_path]) == 0
        assert read_bytes(tmp_path / "out" / "sweep.csv") == first


class TestMetricsCommand:
    def test_prints_per_frame_and_mean(self, tmp_path, capsys, rng):
        a = VideoCube(rng.random((16, 16, 2)))
        pa, pb = str(tmp_path / "a.sci1"), str(tmp_path / "b.sci1")
        save_container(a, pa)
        save_container(a, pb)
        assert main(["metrics", pa, pb]) == 0
        text = capsys.readouterr().out
        assert "frame 0: psnr=inf ssim=1.000000" in text
        assert "mean: psnr=inf" in text

    def test_missing_file(self, tmp_path, capsys):
        assert main(["metrics", str(tmp_path / "a.sci1"),
                     str(tmp_path / "b.sci1")]) == 2


class TestServeCheck:
    def test_echo_handshake(self, capsys):
        endpoint = f"{sys.executable} {os.path.join(HELPERS, 'echo_bridge.py')}"
        assert main(["serve-check", "--endpoint", endpoint]) == 0
        assert "answered" in capsys.readouterr().out

    def test_bridge_failure_exit_code(self, tmp_path, capsys):
        endpoint = f"{sys.executable} {os.path.join(HELPERS, 'bad_dims_bridge.py')}"
        assert main(["serve-check", "--endpoint", endpoint]) == 3
