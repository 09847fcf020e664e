import numpy as np
import pytest

from snapsci.containers import VideoCube
from snapsci.denoisers import DenoiserBinding
from snapsci.operators import SensingOperator, forward, adjoint, project_onto_manifold
from snapsci.simulate import MaskSpec, generate_masks, make_synthetic_video
from snapsci.solvers import (AdmmConfig, DenoiserFailedError, GapConfig,
                             RunReport, SolverDivergedError, admm_solve,
                             bounded_denoiser_check, gap_solve,
                             lambda_schedule_step, residual_delta,
                             warm_start_sequence)


def positive_gram_masks(rng, shape):
    """Binary masks guaranteed to sample every pixel at least once."""
    masks = (rng.random(shape) < 0.5).astype(np.float64)
    masks[:, :, 0] = np.maximum(masks[:, :, 0],
                                (masks.sum(axis=2) == 0).astype(np.float64))
    return masks


class TestConfigs:
    def test_gap_validation(self):
        with pytest.raises(ValueError):
            GapConfig(xi=1.0)
        with pytest.raises(ValueError):
            GapConfig(eta=1.0)
        with pytest.raises(ValueError):
            GapConfig(lambda0=0.0)
        with pytest.raises(ValueError):
            GapConfig(schedule="linear")

    def test_admm_validation(self):
        with pytest.raises(ValueError):
            AdmmConfig(rho0=0.0)
        with pytest.raises(ValueError):
            AdmmConfig(gamma=0.9)
        with pytest.raises(ValueError):
            AdmmConfig(lambda_=-1.0)


class TestResidualDelta:
    def test_identical_pairs(self, rng):
        x = rng.random((3, 3, 2))
        assert residual_delta(x, x, x, x) == 0.0

    def test_unit_cube_jumps(self):
        one = np.zeros((1, 1, 1))
        assert residual_delta(one, one + 3.0, one, one + 4.0) == pytest.approx(7.0)

    def test_matches_direct_norms(self, rng):
        a, b, c, d = (rng.random((4, 3, 2)) for _ in range(4))
        want = (np.sqrt(np.sum((b - a) ** 2)) + np.sqrt(np.sum((d - c) ** 2))) / np.sqrt(24)
        assert residual_delta(a, b, c, d) == pytest.approx(want, rel=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            residual_delta(np.zeros((2, 2, 1)), np.zeros((2, 2, 2)),
                           np.zeros((2, 2, 1)), np.zeros((2, 2, 1)))


class TestLambdaSchedule:
    def test_monotone_always_decays(self):
        cfg = GapConfig(schedule="monotone", xi=0.9)
        assert lambda_schedule_step(1.0, 0.1, 1.0, cfg) == pytest.approx(0.9)

    def test_adaptive_keeps_lambda_on_progress(self):
        cfg = GapConfig(schedule="adaptive", eta=0.5)
        assert lambda_schedule_step(1.0, 0.2, 1.0, cfg) == 1.0

    def test_adaptive_decays_on_stall(self):
        cfg = GapConfig(schedule="adaptive", eta=0.5, xi=0.9)
        assert lambda_schedule_step(1.0, 0.9, 1.0, cfg) == pytest.approx(0.9)


class TestGapSolve:
    def test_identity_one_iteration(self, rng):
        masks = positive_gram_masks(rng, (4, 4, 2))
        op = SensingOperator(masks)
        y = rng.random((4, 4))
        v0 = adjoint(y, op) / op.r_diag.max()
        out, report = gap_solve(y, op, DenoiserBinding(kind="identity"),
                                GapConfig(max_iters=1))
        want = np.clip(project_onto_manifold(v0, y, op), 0.0, 1.0)
        assert np.allclose(out.data, want, atol=1e-14)
        assert len(report) == 1

    def test_constant_video_fixed_point(self, rng):
        x_true = np.full((4, 4, 2), 0.6)
        masks = positive_gram_masks(rng, (4, 4, 2))
        op = SensingOperator(masks)
        y = forward(x_true, op)
        out, _ = gap_solve(y, op, DenoiserBinding(kind="tv3d"),
                           GapConfig(max_iters=50))
        assert np.max(np.abs(out.data - x_true)) <= 1e-6

    def test_beats_initialization(self):
        x = make_synthetic_video("moving_square", (64, 64, 8), velocity=(2, 1), seed=3)
        masks = generate_masks(MaskSpec(shape=(64, 64, 8), seed=7))
        op = SensingOperator(masks)
        y = forward(x.data, op)
        init = np.clip(adjoint(y, op) / op.r_diag.max(), 0.0, 1.0)
        out, report = gap_solve(y, op, DenoiserBinding(kind="tv3d"),
                                GapConfig(max_iters=30), ground_truth=x)
        from snapsci.metrics import video_metrics
        init_psnr = video_metrics(x, init, with_ssim=False).mean_psnr
        assert report.rows[-1]["psnr"] > init_psnr

    def test_contraction_flag_and_report(self, rng):
        masks = positive_gram_masks(rng, (8, 8, 3))
        op = SensingOperator(masks)
        y = forward(rng.random((8, 8, 3)), op)
        out, report = gap_solve(y, op, DenoiserBinding(kind="tv3d"),
                                GapConfig(max_iters=20))
        assert report.contraction_ok
        assert [row["k"] for row in report.rows] == list(range(20))

    def test_monotone_sigma_strictly_decreases(self, rng):
        masks = positive_gram_masks(rng, (6, 6, 2))
        op = SensingOperator(masks)
        y = forward(rng.random((6, 6, 2)), op)
        _, report = gap_solve(y, op, DenoiserBinding(kind="tv3d"),
                              GapConfig(max_iters=30, schedule="monotone"))
        sigmas = [row["sigma"] for row in report.rows]
        assert all(b < a for a, b in zip(sigmas, sigmas[1:]))

    def test_deterministic(self, rng):
        masks = positive_gram_masks(rng, (6, 6, 2))
        op = SensingOperator(masks)
        y = forward(rng.random((6, 6, 2)), op)
        a, _ = gap_solve(y, op, DenoiserBinding(kind="tv3d"), GapConfig(max_iters=10))
        b, _ = gap_solve(y, op, DenoiserBinding(kind="tv3d"), GapConfig(max_iters=10))
        assert np.array_equal(a.data, b.data)

    def test_delta_stop_exits_early(self, rng):
        masks = positive_gram_masks(rng, (4, 4, 2))
        op = SensingOperator(masks)
        y = forward(np.full((4, 4, 2), 0.5), op)
        _, report = gap_solve(y, op, DenoiserBinding(kind="tv3d"),
                              GapConfig(max_iters=100, delta_stop=1e-8))
        assert len(report) < 100

    def test_denoiser_failure_wrapped(self, rng):
        masks = positive_gram_masks(rng, (4, 4, 2))
        op = SensingOperator(masks)
        y = forward(rng.random((4, 4, 2)), op)

        def broken(x, sigma):
            raise RuntimeError("no weights")

        with pytest.raises(DenoiserFailedError, match="iteration 0"):
            gap_solve(y, op, broken, GapConfig(max_iters=5))

    def test_nonfinite_denoiser_output_diverges(self, rng):
        masks = positive_gram_masks(rng, (4, 4, 2))
        op = SensingOperator(masks)
        y = forward(rng.random((4, 4, 2)), op)
        with pytest.raises(SolverDivergedError):
            gap_solve(y, op, lambda x, s: np.full_like(x, np.nan),
                      GapConfig(max_iters=5))


class TestAdmmSolve:
    def test_x_update_matches_dense_solve(self, rng):
        from snapsci.operators import dense_operator, vectorize
        masks = rng.random((3, 3, 2))
        op = SensingOperator(masks)
        x_true = 0.3 + 0.4 * rng.random((3, 3, 2))
        y = forward(x_true, op)
        v0 = 0.3 + 0.4 * rng.random((3, 3, 2))
        rho = 0.7
        out, _ = admm_solve(y, op, DenoiserBinding(kind="identity"),
                            AdmmConfig(rho0=rho, gamma=1.0, max_iters=1, init=v0))
        h = dense_operator(op)
        n = h.shape[1]
        want = np.linalg.solve(h.T @ h + rho * np.eye(n),
                               h.T @ y.ravel() + rho * vectorize(v0))
        got = vectorize(out.data)
        assert np.max(np.abs(got - np.clip(want, 0.0, 1.0))) <= 1e-10

    def test_zero_everything_stays_zero(self):
        op = SensingOperator(np.ones((3, 3, 2)))
        out, report = admm_solve(np.zeros((3, 3)), op,
                                 DenoiserBinding(kind="identity"),
                                 AdmmConfig(max_iters=10, init="zeros"))
        assert np.array_equal(out.data, np.zeros((3, 3, 2)))

    def test_agrees_with_gap_small_instance(self, rng):
        masks = positive_gram_masks(rng, (4, 4, 2))
        op = SensingOperator(masks)
        x_true = rng.random((4, 4, 2))
        x_true = 0.2 + 0.6 * x_true
        y = forward(x_true, op)
        dn = DenoiserBinding(kind="tv3d")
        g, rg = gap_solve(y, op, dn, GapConfig(max_iters=40), ground_truth=VideoCube(x_true))
        a, ra = admm_solve(y, op, dn, AdmmConfig(max_iters=40), ground_truth=VideoCube(x_true))
        assert abs(rg.rows[-1]["psnr"] - ra.rows[-1]["psnr"]) <= 1.0

    def test_identity_residual_non_increasing(self, rng):
        masks = positive_gram_masks(rng, (6, 6, 2))
        op = SensingOperator(masks)
        y = forward(0.2 + 0.6 * rng.random((6, 6, 2)), op)
        _, report = admm_solve(y, op, DenoiserBinding(kind="identity"),
                               AdmmConfig(rho0=0.5, gamma=1.0, max_iters=20))
        res = [row["residual"] for row in report.rows]
        assert all(b <= a * (1.0 + 1e-9) + 1e-12 for a, b in zip(res[1:], res[2:]))

    def test_rho_grows_by_gamma(self, rng):
        masks = positive_gram_masks(rng, (4, 4, 2))
        op = SensingOperator(masks)
        y = forward(rng.random((4, 4, 2)), op)
        _, report = admm_solve(y, op, DenoiserBinding(kind="identity"),
                               AdmmConfig(rho0=0.5, gamma=1.1, max_iters=5))
        rhos = [row["lambda_or_rho"] for row in report.rows]
        assert rhos == pytest.approx([0.5 * 1.1 ** k for k in range(5)])


class TestWarmStart:
    def test_single_measurement_matches_gap(self, rng):
        masks = positive_gram_masks(rng, (6, 6, 2))
        op = SensingOperator(masks)
        y = forward(rng.random((6, 6, 2)), op)
        cfg = GapConfig(max_iters=15)
        dn = DenoiserBinding(kind="tv3d")
        outs, reports = warm_start_sequence([y], op, dn, cfg)
        direct, _ = gap_solve(y, op, dn, cfg)
        assert len(outs) == 1
        assert np.array_equal(outs[0].data, direct.data)

    def test_repeat_measurement_starts_closer(self, rng):
        masks = positive_gram_masks(rng, (8, 8, 2))
        op = SensingOperator(masks)
        y = forward(rng.random((8, 8, 2)), op)
        cfg = GapConfig(max_iters=15)
        outs, reports = warm_start_sequence([y, y], op, DenoiserBinding(kind="tv3d"), cfg)
        assert reports[1].rows[0]["residual"] <= reports[0].rows[-1]["residual"] + 1e-6

    def test_pan_sequence_beats_cold_start(self):
        video = make_synthetic_video("pan_texture", (16, 16, 6), velocity=(1, 1), seed=5)
        masks = generate_masks(MaskSpec(shape=(16, 16, 2), seed=9))
        op = SensingOperator(masks)
        truths = [VideoCube(video.data[:, :, 2 * t:2 * t + 2]) for t in range(3)]
        ys = [forward(t.data, op) for t in truths]
        cfg = GapConfig(max_iters=15)
        dn = DenoiserBinding(kind="tv3d")
        warm, _ = warm_start_sequence(ys, op, dn, cfg)
        from snapsci.metrics import video_metrics
        warm_psnr = np.mean([video_metrics(t, o, with_ssim=False).mean_psnr
                             for t, o in zip(truths, warm)])
        cold_psnr = np.mean([video_metrics(t, gap_solve(y, op, dn, cfg)[0],
                                           with_ssim=False).mean_psnr
                             for t, y in zip(truths, ys)])
        # soft criterion: warm start should not hurt; both values in the assert
        assert warm_psnr >= cold_psnr - 0.5, (warm_psnr, cold_psnr)

    def test_warmup_pair_applies_to_first(self, rng):
        masks = positive_gram_masks(rng, (6, 6, 2))
        op = SensingOperator(masks)
        y = forward(rng.random((6, 6, 2)), op)
        warm = (DenoiserBinding(kind="identity"), GapConfig(max_iters=3))
        outs, _ = warm_start_sequence([y], op, DenoiserBinding(kind="tv3d"),
                                      GapConfig(max_iters=10), warmup=warm)
        assert len(outs) == 1


class TestBoundedDenoiser:
    def test_identity_ratio_zero(self, rng):
        ok, ratio = bounded_denoiser_check(DenoiserBinding(kind="identity"),
                                           rng.random((5, 5, 2)), 0.1, 1e-12)
        assert ok and ratio == 0.0

    def test_clip_in_range_ratio_zero(self, rng):
        ok, ratio = bounded_denoiser_check(DenoiserBinding(kind="clip"),
                                           rng.random((5, 5, 2)), 0.1, 1e-12)
        assert ok and ratio == 0.0

    def test_tv_measured_constant(self, rng):
        x = rng.random((8, 8, 4))
        ok, ratio = bounded_denoiser_check(DenoiserBinding(kind="tv3d"), x, 0.1, 1e9)
        assert ok and ratio > 0
        ok2, _ = bounded_denoiser_check(DenoiserBinding(kind="tv3d"), x, 0.1,
                                        ratio * 1.01)
        assert ok2

    def test_sigma_must_be_positive(self, rng):
        with pytest.raises(ValueError):
            bounded_denoiser_check(DenoiserBinding(kind="identity"),
                                   rng.random((2, 2, 1)), 0.0, 1.0)


class TestRunReport:
    def test_csv_columns_and_timing_toggle(self):
        report = RunReport()
        report.record(0, 1.0, 0.5, 0.1, 1e-12, 30.0, None, 12.5)
        text = report.to_csv()
        head, row = text.strip().split("\n")
        assert head == "k,lambda_or_rho,sigma,delta,residual,psnr,ssim,millis"
        assert row.endswith("12.5")
        frozen = report.to_csv(include_timing=False)
        assert frozen.strip().split("\n")[1].endswith(",0.0")

    def test_csv_infinite_psnr(self):
        report = RunReport()
        report.record(0, 1.0, 0.5, 0.0, 0.0, float("inf"), None, 0.0)
        assert ",inf," in report.to_csv()

    def test_json_round_trip(self):
        import json
        report = RunReport()
        report.record(0, 1.0, 0.5, 0.1, 0.0, None, None, 3.0)
        doc = json.loads(report.to_json(include_timing=False))
        assert doc["rows"][0]["millis"] == 0.0
        assert doc["columns"][0] == "k"
