import math

import numpy as np
import pytest

from fracreg.errors import InvalidInputError
from fracreg.estimator import TuningRule
from fracreg.experiments import (
    ExperimentConfig,
    eigenvalue_growth_diagnostic,
    generate,
    mean_fit_curve,
    run_sweep,
)
from fracreg.graph import KernelSpec

KERNEL = KernelSpec.truncated_gaussian()


def grid_config(**overrides):
    base = dict(
        truth="f2", n_grid=(40, 60), repetitions=2, seed=11, noise_sd=1.0,
        kernel=KERNEL, k_grid=(1, 4, 8, 16), eps_grid=(0.5, 1.0),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfigValidation:
    def test_n_grid_strictly_increasing(self):
        with pytest.raises(InvalidInputError):
            grid_config(n_grid=(60, 40))

    def test_n_grid_minimum(self):
        with pytest.raises(InvalidInputError):
            grid_config(n_grid=(1, 40))

    def test_repetitions_positive(self):
        with pytest.raises(InvalidInputError):
            grid_config(repetitions=0)

    def test_rule_and_grids_exclusive(self):
        with pytest.raises(InvalidInputError):
            grid_config(tuning=TuningRule(s=0.5, M=1.0, dim=1))
        with pytest.raises(InvalidInputError):
            ExperimentConfig(truth="f2", n_grid=(40,), repetitions=1, seed=0)

    def test_unknown_truth(self):
        with pytest.raises(InvalidInputError):
            grid_config(truth="f7")

    def test_only_one_dimensional_designs(self):
        with pytest.raises(InvalidInputError):
            grid_config(dim=2)


class TestGenerate:
    def test_determinism_bit_identical(self):
        cfg = grid_config()
        a = generate(cfg, 50, 3)
        b = generate(cfg, 50, 3)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.responses, b.responses)

    def test_streams_differ_across_reps_and_n(self):
        cfg = grid_config()
        a = generate(cfg, 50, 0)
        b = generate(cfg, 50, 1)
        c = generate(cfg, 52, 0)
        assert not np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points[:50])

    def test_noiseless_responses_equal_truth(self):
        cfg = grid_config(noise_sd=0.0)
        s = generate(cfg, 80, 0)
        truth = cfg.truth_function()(s.points[:, 0])
        np.testing.assert_array_equal(s.responses, truth)

    def test_uniform_design_moments(self):
        cfg = grid_config()
        s = generate(cfg, 100000, 0)
        x = s.points[:, 0]
        assert abs(x.mean() - 2.5) < 0.02
        assert abs(x.var() - 25.0 / 12.0) < 0.05


class TestRunSweep:
    def test_noiseless_full_rank_zero_mse(self):
        cfg = grid_config(noise_sd=0.0, k_grid=(40,), eps_grid=(1.0,))
        report = run_sweep(cfg)
        assert len(report.records) == 4
        for r in report.records:
            if r.n == 40:  # K = n: interpolation up to round-off
                assert r.mse <= 1e-20

    def test_two_point_slope_is_difference_quotient(self):
        # eps large enough that both graphs stay connected, so neither n is
        # dropped by the disconnection exclusion rule
        cfg = grid_config(n_grid=(40, 80), repetitions=1, eps_grid=(1.2,))
        report = run_sweep(cfg)
        assert report.excluded_n == ()
        m1, m2 = report.mean_mse_per_n
        expect = (math.log(m2) - math.log(m1)) / (math.log(80) - math.log(40))
        assert report.fitted_slope == pytest.approx(expect, rel=1e-12)
        assert math.isnan(report.slope_stderr)

    def test_determinism_and_thread_invariance(self):
        cfg = grid_config()
        a = run_sweep(cfg, threads=1)
        b = run_sweep(cfg, threads=2)
        assert a == b

    def test_rule_tuning_path(self):
        cfg = ExperimentConfig(
            truth="f2", n_grid=(100, 150), repetitions=2, seed=5, kernel=KERNEL,
            tuning=TuningRule(s=0.45, M=1.0, dim=1, c0=5.0, C0=5.0),
        )
        report = run_sweep(cfg)
        assert len(report.records) == 4
        assert report.theoretical_slope == pytest.approx(-0.9 / 1.9)
        for r in report.records:
            assert r.K >= 1 and r.epsilon > 0

    def test_disconnected_smallest_n_excluded_from_slope(self):
        # at eps = 0.2 the n = 40 design on [0, 5] fragments, so the smallest
        # n must be dropped from the log-log fit
        cfg = grid_config(n_grid=(40, 150, 300), repetitions=2, eps_grid=(0.2,),
                          k_grid=(1, 4, 8))
        report = run_sweep(cfg)
        assert report.disconnected_fraction[0] > 0.1
        assert report.excluded_n == (40,)
        assert math.isfinite(report.fitted_slope)

    def test_failures_recorded_and_excluded(self):
        # an empty tuning window fails every repetition deterministically
        cfg = ExperimentConfig(
            truth="f2", n_grid=(40, 60), repetitions=2, seed=9, kernel=KERNEL,
            tuning=TuningRule(s=0.45, M=1.0, dim=1, c0=100.0, C0=1e-4),
        )
        report = run_sweep(cfg)
        assert len(report.records) == 0
        assert len(report.failures) == 4
        assert math.isnan(report.fitted_slope)
        assert "TuningError" in report.failures[0].message

    def test_noiseless_mse_equals_bias(self):
        from fracreg.estimator import bias_variance_decompose, fit
        cfg = grid_config(noise_sd=0.0, k_grid=(6,), eps_grid=(0.8,), n_grid=(50, 60))
        report = run_sweep(cfg)
        samples = generate(cfg, 50, 0)
        truth = cfg.truth_function()(samples.points[:, 0])
        res = fit(samples, 6, 0.8, KERNEL)
        bv = bias_variance_decompose(res, truth)
        rec = next(r for r in report.records if r.n == 50 and r.rep == 0)
        assert rec.mse == bv.bias_sq

    def test_csv_schemas(self, tmp_path):
        cfg = grid_config()
        report = run_sweep(cfg)
        rec_path, sum_path = tmp_path / "records.csv", tmp_path / "summary.csv"
        report.write_records_csv(rec_path)
        report.write_summary_csv(sum_path)
        rec_lines = rec_path.read_text().strip().splitlines()
        assert rec_lines[0] == "n,rep,K,epsilon,mse"
        assert len(rec_lines) == 1 + len(report.records)
        sum_lines = sum_path.read_text().strip().splitlines()
        assert sum_lines[0] == "n,mean_mse,fitted_slope,theoretical_slope"


class TestGrowthDiagnostic:
    def _config(self):
        return ExperimentConfig(
            truth="f2", n_grid=(1000,), repetitions=1, seed=17, kernel=KERNEL,
            tuning=TuningRule(s=0.45, M=1.0, dim=1, c0=5.0, C0=5.0),
        )

    def test_insufficient_range(self):
        diag = eigenvalue_growth_diagnostic(self._config(), 200, 2)
        assert diag.insufficient_range
        assert math.isnan(diag.exponent)

    def test_small_smoke(self):
        diag = eigenvalue_growth_diagnostic(self._config(), 300, 60)
        assert not diag.insufficient_range
        assert math.isfinite(diag.exponent)
        assert diag.cap_constant > 0
        assert 0.0 <= diag.window_violations <= 1.0

    def test_m_bounds(self):
        with pytest.raises(InvalidInputError):
            eigenvalue_growth_diagnostic(self._config(), 100, 200)


class TestMeanFitCurve:
    def test_noiseless_full_rank_matches_truth(self):
        cfg = grid_config(noise_sd=0.0, k_grid=(60,), eps_grid=(1.0,),
                          n_grid=(40, 60), repetitions=3)
        grid = np.linspace(0.2, 4.8, 12)
        curve = mean_fit_curve(cfg, 60, grid)
        mt = np.asarray(curve.mean_truth)
        mf = np.asarray(curve.mean_fit)
        filled = np.asarray(curve.counts) > 0
        assert filled.all()
        np.testing.assert_allclose(mf[filled], mt[filled], atol=1e-9)

    def test_empty_bucket_flagged_not_interpolated(self):
        cfg = grid_config(n_grid=(40, 60), repetitions=1)
        # -10 is nearer to nothing: every design point maps to the other two
        curve = mean_fit_curve(cfg, 40, [-10.0, 2.0, 3.0])
        assert curve.counts[0] == 0
        assert math.isnan(curve.mean_fit[0])
        assert math.isnan(curve.mean_truth[0])
        assert curve.counts[1] > 0

    def test_csv_output(self, tmp_path):
        cfg = grid_config(repetitions=1)
        curve = mean_fit_curve(cfg, 40, np.linspace(0.5, 4.5, 5))
        path = tmp_path / "curve.csv"
        curve.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "x,truth,mean_fit"
        assert len(lines) == 6

    def test_blocks_curve_tracks_truth_away_from_jumps(self):
        cfg = ExperimentConfig(
            truth="f2", n_grid=(500, 1000), repetitions=20, seed=4, kernel=KERNEL,
            k_grid=(4, 8, 11, 16, 23, 32, 45, 64), eps_grid=(0.12, 0.25),
        )
        grid = np.linspace(0.05, 4.95, 50)
        curve = mean_fit_curve(cfg, 1000, grid)
        f2 = cfg.truth_function()
        jumps = (1.0, 2.0, 3.0)
        for x, fit_val in zip(curve.grid, curve.mean_fit):
            if min(abs(x - j) for j in jumps) <= 0.2:
                continue
            assert abs(fit_val - f2(x)) <= 0.25
