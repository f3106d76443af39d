from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdit.errors import ConfigError, EmptyWindowError, SingularDesignError, ThinWindowError
from rdit.localpoly import Kernel, local_polynomial_fit, nn_residuals, polynomial_basis, weighted_least_squares


def normal_equations(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Oracle: Gaussian elimination on X'WX beta = X'Wy, coded by hand."""
    k = X.shape[1]
    A = [[float(np.sum(w * X[:, i] * X[:, j])) for j in range(k)] for i in range(k)]
    b = [float(np.sum(w * X[:, i] * y)) for i in range(k)]
    for col in range(k):
        piv = max(range(col, k), key=lambda r: abs(A[r][col]))
        A[col], A[piv] = A[piv], A[col]
        b[col], b[piv] = b[piv], b[col]
        for r in range(col + 1, k):
            f = A[r][col] / A[col][col]
            for c in range(col, k):
                A[r][c] -= f * A[col][c]
            b[r] -= f * b[col]
    beta = [0.0] * k
    for r in range(k - 1, -1, -1):
        beta[r] = (b[r] - sum(A[r][c] * beta[c] for c in range(r + 1, k))) / A[r][r]
    return np.array(beta)


class TestKernel:
    @pytest.mark.parametrize("kind", ["triangular", "uniform", "epanechnikov"])
    def test_weight_properties(self, kind):
        k = Kernel(kind)
        u = np.linspace(-3, 3, 6001)
        w = k.weight(u)
        assert np.all(w >= 0)
        assert np.all(w[np.abs(u) > 1] == 0)
        np.testing.assert_array_equal(w, k.weight(-u))

    def test_triangular_formula(self):
        u = np.linspace(-2, 2, 401)
        np.testing.assert_allclose(Kernel("triangular").weight(u), np.maximum(0, 1 - np.abs(u)), atol=0)

    def test_boundary_convention(self):
        assert Kernel("triangular").weight(1.0) == 0.0
        assert Kernel("epanechnikov").weight(-1.0) == 0.0
        assert Kernel("uniform").weight(1.0) > 0.0

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            Kernel("gaussian")


class TestWeightedLeastSquares:
    def test_constant_fit(self):
        fit = weighted_least_squares(np.ones((3, 1)), np.array([2.0, 2.0, 2.0]), np.ones(3))
        assert fit.coefficients[0] == pytest.approx(2.0, abs=1e-15)
        assert fit.sse == pytest.approx(0.0, abs=1e-28)

    def test_exact_line(self):
        X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
        fit = weighted_least_squares(X, np.array([1.0, 3.0, 5.0]), np.ones(3))
        np.testing.assert_allclose(fit.coefficients, [1.0, 2.0], rtol=0, atol=1e-14)

    def test_matches_normal_equations_on_random_systems(self):
        g = np.random.default_rng(11)
        for _ in range(100):
            X = g.normal(size=(40, 3))
            y = g.normal(size=40)
            w = g.uniform(0.1, 2.0, size=40)
            beta = weighted_least_squares(X, y, w).coefficients
            oracle = normal_equations(X, y, w)
            np.testing.assert_allclose(beta, oracle, rtol=1e-10, atol=0)

    def test_sse_is_weighted_residual_sum(self, rng):
        X = np.column_stack([np.ones(30), rng.normal(size=30)])
        y = rng.normal(size=30)
        w = rng.uniform(0, 1, size=30)
        fit = weighted_least_squares(X, y, w)
        assert fit.sse == pytest.approx(float(np.sum(w * fit.residuals**2)), rel=1e-12)

    @pytest.mark.parametrize("variance", ["hc0", "nn"])
    def test_covariance_symmetric_psd(self, rng, variance):
        x = np.sort(rng.normal(size=50))
        X = polynomial_basis(x, 2)
        fit = weighted_least_squares(X, rng.normal(size=50), rng.uniform(0.2, 1, 50), variance, running=x)
        np.testing.assert_array_equal(fit.covariance, fit.covariance.T)
        assert np.linalg.eigvalsh(fit.covariance).min() > -1e-12
        assert np.all(np.diag(fit.covariance) >= 0)

    def test_rank_deficiency_names_columns(self):
        x = np.arange(6.0)
        X = np.column_stack([np.ones(6), x, 2 * x])
        with pytest.raises(SingularDesignError) as info:
            weighted_least_squares(X, x, np.ones(6))
        assert len(info.value.columns) == 1

    def test_all_zero_weights(self):
        with pytest.raises(EmptyWindowError):
            weighted_least_squares(np.ones((3, 1)), np.ones(3), np.zeros(3))

    def test_nn_needs_running_variable(self):
        with pytest.raises(ConfigError):
            weighted_least_squares(np.ones((3, 1)), np.ones(3), np.ones(3), "nn")


class TestNearestNeighbourResiduals:
    def test_three_neighbour_hand_value(self):
        x = np.arange(6.0)
        y = np.array([0.0, 1.0, 4.0, 9.0, 16.0, 25.0])
        # point 0 matches {1, 2, 3}; point 2 matches {1, 3} and the tied {0, 4}
        e = nn_residuals(x, y, 3)
        s = np.sqrt(3 / 4)
        assert e[0] == pytest.approx(s * (0 - (1 + 4 + 9) / 3))
        assert e[2] == pytest.approx(np.sqrt(4 / 5) * (4 - (1 + 9 + 0 + 16) / 4))

    def test_constant_outcome(self):
        assert np.all(nn_residuals(np.arange(10.0), np.full(10, 3.0)) == 0)


class TestLocalPolynomialFit:
    def test_exact_line_left(self):
        x = np.arange(-5.0, 6.0)
        fit = local_polynomial_fit(x, 3 + 2 * x, 0.0, 10.0, 1, side="left")
        assert fit.coef("1") == pytest.approx(3.0, abs=1e-12)
        assert fit.coef("dx") == pytest.approx(2.0, abs=1e-12)

    def test_pure_step(self):
        x = np.arange(-10.0, 10.0)
        fit = local_polynomial_fit(x, 5.0 * (x >= 0), 0.0, 15.0, 1)
        assert fit.coef("D") == pytest.approx(5.0, abs=1e-12)

    def test_synthetic_jump_within_three_se(self, step_panel):
        x, y = step_panel.event_time, step_panel.outcome("civilian_casualties")
        fit = local_polynomial_fit(x, y, 0.0, 48.0, 1)
        se = fit.se()[fit.names.index("D")]
        assert abs(fit.coef("D") + 8) < 3 * se
        # cross-check: uniform kernel over everything equals plain OLS with interactions
        uni = local_polynomial_fit(x, y, 0.0, 1e6, 1, kernel="uniform")
        d = (x >= 0).astype(float)
        X = np.column_stack([np.ones_like(x), x, d, d * x])
        beta = np.linalg.lstsq(X, y, rcond=None)[0]
        assert uni.coef("D") == pytest.approx(beta[2], rel=1e-9)

    def test_uniform_wide_equals_global_polynomial(self, rng):
        x = rng.uniform(-20, 20, 80)
        y = 1 + 0.3 * x - 0.02 * x**2 + rng.normal(size=80)
        fit = local_polynomial_fit(x, y, 0.0, 100.0, 2, kernel="uniform", side="left")
        left = x < 0
        beta = np.polyfit(x[left], y[left], 2)[::-1]
        np.testing.assert_allclose(fit.coefficients, beta, rtol=1e-9)

    def test_thin_window_reports_counts(self):
        x = np.array([-3.0, -2.0, 1.0, 2.0, 3.0, 4.0])
        with pytest.raises(ThinWindowError) as info:
            local_polynomial_fit(x, x, 0.0, 10.0, 1)
        assert (info.value.n_left, info.value.n_right) == (2, 4)

    def test_bad_bandwidth(self):
        with pytest.raises(ConfigError):
            local_polynomial_fit(np.arange(5.0), np.arange(5.0), 0.0, 0.0)

    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        k=st.floats(-50, 50).filter(lambda v: abs(v) > 1e-3),
        shift=st.floats(-100, 100),
    )
    def test_scale_and_shift(self, seed, k, shift):
        g = np.random.default_rng(seed)
        x = np.arange(-15.0, 15.0)
        y = g.normal(size=len(x)) + 3 * (x >= 0)
        base = local_polynomial_fit(x, y, 0.0, 12.0, 1)
        scaled = local_polynomial_fit(x, k * y, 0.0, 12.0, 1)
        shifted = local_polynomial_fit(x + shift, y, shift, 12.0, 1)
        assert scaled.coef("D") == pytest.approx(k * base.coef("D"), rel=1e-9, abs=1e-9)
        np.testing.assert_allclose(shifted.coefficients, base.coefficients, rtol=1e-7, atol=1e-8)
