"""Recalibration factor and its exact invariants."""

import numpy as np
import pytest

from gpnn import calibrate
from gpnn.gp import PredictiveDistribution
from gpnn.kernels import Theta

THETA = Theta(1.2, 0.3, 0.8)


def synthetic_predictor(mu_by_key, var_by_key):
    """Predictor keyed on the first coordinate, for fully controlled residuals."""

    def predict(x):
        key = float(np.asarray(x).ravel()[0])
        return PredictiveDistribution(mean=mu_by_key[key], variance=var_by_key[key])

    return predict


class TestWeakCalibrationFactor:
    def test_standardized_residuals_of_one(self):
        y = np.array([1.0, 2.0, 3.0])
        mu = y - 1.0
        var = np.ones(3)
        assert calibrate.weak_calibration_factor(y, mu, var) == 1.0

    def test_mean_of_z(self):
        # z values {0.5, 1.5} average to 1
        y = np.array([1.0, 1.0])
        mu = np.array([1.0 - np.sqrt(0.5), 1.0 - np.sqrt(1.5)])
        var = np.ones(2)
        assert calibrate.weak_calibration_factor(y, mu, var) == pytest.approx(1.0, rel=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            calibrate.weak_calibration_factor(np.array([]), np.array([]), np.array([]))

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError):
            calibrate.weak_calibration_factor(np.ones(1), np.zeros(1), np.zeros(1))


class TestCalibrate:
    def test_z_values_two_and_four(self):
        X = np.array([[0.0], [1.0]])
        y = np.array([2.0, 4.0])
        pred = synthetic_predictor({0.0: 0.0, 1.0: 0.0}, {0.0: 2.0, 1.0: 4.0})
        result = calibrate.calibrate(pred, X, y, THETA)
        assert result.alpha == pytest.approx(3.0, rel=1e-12)
        assert result.theta_prime.lengthscale == THETA.lengthscale
        assert result.theta_prime.noise_var == pytest.approx(3.0 * THETA.noise_var, rel=1e-12)
        assert result.theta_prime.signal_var == pytest.approx(3.0 * THETA.signal_var, rel=1e-12)
        assert result.calibration_set_size == 2

    def test_already_calibrated_is_identity(self):
        X = np.array([[0.0], [1.0]])
        y = np.array([1.5, -0.5])
        pred = synthetic_predictor({0.0: 0.5, 1.0: 0.5}, {0.0: 1.0, 1.0: 1.0})
        result = calibrate.calibrate(pred, X, y, THETA)
        assert result.alpha == pytest.approx(1.0, rel=1e-12)
        assert result.theta_prime == THETA

    def test_length_mismatch(self):
        pred = synthetic_predictor({0.0: 0.0}, {0.0: 1.0})
        with pytest.raises(ValueError):
            calibrate.calibrate(pred, np.array([[0.0]]), np.array([1.0, 2.0]), THETA)


class TestExactInvariants:
    """Scaling mechanics on a real GP predictor: calibration on C becomes exactly 1,
    the chosen factor minimizes NLL on C over rescalings, and test MSE is untouched."""

    def setup_predictions(self, theta, seed=0):
        from gpnn import gp
        from gpnn.kernels import RBF

        rng = np.random.default_rng(seed)
        X = rng.normal(size=(60, 2))
        y = rng.normal(size=60)
        XC = rng.normal(size=(25, 2))
        yC = rng.normal(size=25)

        def predict_under(t):
            preds = [gp.predictive(t, RBF, X, y, x) for x in XC]
            return np.array([p.mean for p in preds]), np.array([p.variance for p in preds])

        return predict_under, yC

    def test_recalibrated_statistic_is_one(self):
        predict_under, yC = self.setup_predictions(THETA)
        mu, var = predict_under(THETA)
        alpha = calibrate.weak_calibration_factor(yC, mu, var)
        theta_prime = calibrate.rescale_theta(THETA, alpha)
        mu2, var2 = predict_under(theta_prime)
        z = calibrate.weak_calibration_factor(yC, mu2, var2)
        assert abs(z - 1.0) < 1e-10

    def test_alpha_minimizes_nll_on_grid(self):
        from gpnn import metrics

        predict_under, yC = self.setup_predictions(THETA, seed=1)
        mu, var = predict_under(THETA)
        alpha = calibrate.weak_calibration_factor(yC, mu, var)

        def nll_at(a):
            return metrics.evaluate_arrays(mu, a * var, yC).nll

        best = nll_at(alpha)
        for factor in (0.5, 0.75, 1.5, 2.0):
            assert best < nll_at(alpha * factor)

    def test_mse_unchanged_on_held_out_data(self):
        from gpnn import gp
        from gpnn.kernels import RBF

        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 2))
        y = rng.normal(size=50)
        X_test = rng.normal(size=(30, 2))
        y_test = rng.normal(size=30)
        alpha = 2.7
        theta_prime = calibrate.rescale_theta(THETA, alpha)
        mse = []
        for t in (THETA, theta_prime):
            mu = np.array([gp.predictive(t, RBF, X, y, x).mean for x in X_test])
            mse.append(np.mean((y_test - mu) ** 2))
        assert abs(mse[0] - mse[1]) < 1e-10
