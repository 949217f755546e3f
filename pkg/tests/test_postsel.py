"""Tests for the post-LASSO refit."""

import numpy as np
import pytest

from hdselect.postsel import SelectionError, post_lasso_fitted, post_lasso_ols
from hdselect.solver import PenaltyConfig, fit_lasso


class TestPostLassoOls:
    """OLS refit on the selected support."""

    def test_full_support_equals_ols(self, rng):
        """Test that refitting every column reproduces OLS with intercept."""
        X = rng.standard_normal((40, 4))
        y = 1.0 + X @ np.array([1.0, 0.0, -2.0, 0.5]) + rng.standard_normal(40)
        refit = post_lasso_ols(X, y, [0, 1, 2, 3])
        design = np.column_stack([np.ones(40), X])
        expected, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert refit.intercept == pytest.approx(expected[0], abs=1e-8)
        np.testing.assert_allclose(refit.coefficients, expected[1:], atol=1e-8)
        assert refit.dof == 40 - 5

    def test_zeros_off_support(self, rng):
        """Test that unselected columns keep a zero coefficient."""
        X = rng.standard_normal((30, 5))
        y = X[:, 1] + rng.standard_normal(30)
        refit = post_lasso_ols(X, y, [1])
        assert refit.coefficients[[0, 2, 3, 4]].tolist() == [0.0, 0.0, 0.0, 0.0]
        assert refit.active_set == (1,)

    def test_empty_support_fits_mean(self, rng):
        """Test that an empty support predicts the mean of y."""
        X = rng.standard_normal((20, 3))
        y = rng.normal(5, 1, 20)
        fitted, refit = post_lasso_fitted(X, y, [])
        np.testing.assert_allclose(fitted, np.full(20, y.mean()))
        assert refit.active_set == ()

    def test_unpenalized_always_refit(self, rng):
        """Test that always-in columns join the support."""
        X = rng.standard_normal((30, 3))
        y = rng.standard_normal(30)
        refit = post_lasso_ols(X, y, [], unpenalized_always_in=[2])
        assert refit.coefficients[2] != 0.0

    def test_collinear_column_dropped(self, rng):
        """Test that a duplicated selected column is dropped, keeping the first."""
        x = rng.standard_normal(30)
        X = np.column_stack([x, x, rng.standard_normal(30)])
        y = 2 * x + rng.standard_normal(30)
        refit = post_lasso_ols(X, y, [0, 1, 2])
        assert refit.dropped == [1]
        assert refit.coefficients[1] == 0.0

    def test_insufficient_degrees_of_freedom(self, rng):
        """Test that too many selected columns for the rows raises."""
        X = rng.standard_normal((5, 6))
        with pytest.raises(SelectionError, match="degrees of freedom"):
            post_lasso_ols(X, rng.standard_normal(5), range(5))

    def test_saturated_support_allowed(self, rng):
        """Test that N - 1 selected columns with a constant interpolate the response."""
        X = rng.standard_normal((10, 9))
        y = rng.standard_normal(10)
        fitted, refit = post_lasso_fitted(X, y, range(9))
        np.testing.assert_allclose(fitted, y, atol=1e-8)
        assert refit.dof == 0

    def test_out_of_range(self, rng):
        """Test that a support index past the design raises."""
        X = rng.standard_normal((10, 2))
        with pytest.raises(SelectionError):
            post_lasso_ols(X, rng.standard_normal(10), [3])


class TestAttenuation:
    """Refit against LASSO shrinkage."""

    def test_refit_undoes_shrinkage_on_orthogonal_design(self, rng):
        """Test that |b_post| >= |b_lasso| coordinate-wise when X'X = N I."""
        n, p = 80, 6
        A = rng.standard_normal((n, p))
        q, _ = np.linalg.qr(A - A.mean(axis=0))
        X = np.sqrt(n) * q
        y = X @ np.array([1.5, -1.0, 0.4, 0.0, 0.1, -0.7]) + rng.standard_normal(n)
        y -= y.mean()
        fit = fit_lasso(X, y, PenaltyConfig.uniform(25.0, p), tol=1e-13, kkt_tol=1e-10)
        refit = post_lasso_ols(X, y, fit.active_set)
        assert np.all(np.abs(refit.coefficients) >= np.abs(fit.coefficients) - 1e-10)
        on_support = list(fit.active_set)
        np.testing.assert_allclose(
            refit.coefficients[on_support], X[:, on_support].T @ y / n, atol=1e-8
        )
