"""Metric aggregation and the closed-form large-n reference values."""

import math

import numpy as np
import pytest

from gpnn import metrics
from gpnn.gp import PredictiveDistribution

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def preds(mu, var):
    return [PredictiveDistribution(m, v) for m, v in zip(mu, var)]


class TestEvaluate:
    def test_perfect_predictions(self):
        y = np.array([0.0, 1.0, -2.0])
        report = metrics.evaluate(preds(y, np.ones(3)), y)
        assert report.mse == 0.0
        assert report.rmse == 0.0
        assert report.cal == 0.0
        assert report.nll == pytest.approx(HALF_LOG_2PI, rel=1e-12)
        assert report.count == 3

    def test_unit_residual(self):
        y = np.array([2.0])
        report = metrics.evaluate(preds([1.0], [1.0]), y)
        assert report.mse == 1.0
        assert report.cal == 1.0
        assert report.nll == pytest.approx(0.5 + HALF_LOG_2PI, rel=1e-12)

    def test_rmse_is_sqrt_mse(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=40)
        mu = rng.normal(size=40)
        var = np.exp(rng.normal(size=40))
        report = metrics.evaluate(preds(mu, var), y)
        assert report.rmse == math.sqrt(report.mse)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=30)
        mu = rng.normal(size=30)
        var = np.exp(rng.normal(size=30))
        a = metrics.evaluate(preds(mu, var), y)
        perm = rng.permutation(30)
        b = metrics.evaluate(preds(mu[perm], var[perm]), y[perm])
        assert a.mse == pytest.approx(b.mse, rel=1e-12)
        assert a.nll == pytest.approx(b.nll, rel=1e-12)
        assert a.cal == pytest.approx(b.cal, rel=1e-12)

    def test_cal_scales_inversely_with_variance(self):
        rng = np.random.default_rng(2)
        y = rng.normal(size=20)
        mu = rng.normal(size=20)
        var = np.exp(rng.normal(size=20))
        base = metrics.evaluate(preds(mu, var), y)
        for a in (0.5, 2.0, 9.0):
            scaled = metrics.evaluate(preds(mu, a * var), y)
            assert scaled.cal == pytest.approx(base.cal / a, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            metrics.evaluate(preds([0.0], [1.0]), np.zeros(2))

    def test_nonpositive_variance(self):
        with pytest.raises(ValueError):
            metrics.evaluate(preds([0.0], [0.0]), np.zeros(1))

    def test_misspecified_noise_fixture(self):
        # noise 0.1 but variances reported as 0.2: statistic halves
        rng = np.random.default_rng(3)
        y = rng.normal(0.0, np.sqrt(0.1), size=200_000)
        report = metrics.evaluate_arrays(np.zeros(y.size), np.full(y.size, 0.2), y)
        assert report.cal == pytest.approx(0.5, abs=0.01)


class TestAsymptoticLimits:
    def test_mse_limit(self):
        mse_lim, _, _ = metrics.asymptotic_limits(0.1, 0.1, 400)
        assert mse_lim == pytest.approx(0.10025, rel=1e-12)

    def test_cal_limit(self):
        for m in (10, 100, 400):
            _, cal_lim, _ = metrics.asymptotic_limits(0.1, 0.2, m)
            assert cal_lim == pytest.approx(0.5, rel=1e-12)

    def test_nll_limit_matched(self):
        _, _, nll_lim = metrics.asymptotic_limits(0.1, 0.1, 400)
        expected = 0.5 * (math.log(0.1 * (1 + 1 / 400)) + 1.0 + math.log(2 * math.pi))
        assert nll_lim == pytest.approx(expected, rel=1e-12)
        assert nll_lim == pytest.approx(0.2688944268, abs=1e-9)

    def test_nll_limit_minimized_at_true_noise(self):
        noise = 0.17
        grid = noise * np.array([0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0])
        values = [metrics.asymptotic_limits(noise, a, 100)[2] for a in grid]
        assert int(np.argmin(values)) == 3

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            metrics.asymptotic_limits(-0.1, 0.1, 10)
        with pytest.raises(ValueError):
            metrics.asymptotic_limits(0.1, 0.1, 0)


class TestReportSerialization:
    def test_text_block_round_trips_values(self):
        report = metrics.MetricsReport(mse=0.25, rmse=0.5, nll=1.25, cal=0.9, count=7)
        block = report.text_block()
        parsed = dict(line.split(": ") for line in block.strip().splitlines())
        assert float(parsed["mse"]) == 0.25
        assert int(parsed["count"]) == 7

    def test_csv_row_matches_header(self):
        report = metrics.MetricsReport(mse=0.25, rmse=0.5, nll=1.25, cal=0.9, count=7)
        assert len(report.csv_row().split(",")) == len(metrics.MetricsReport.CSV_HEADER.split(","))
