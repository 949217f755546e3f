"""Tests for the synthetic designs and Monte Carlo behaviour of the estimators.

The Monte Carlo classes are marked slow. They run a reduced number of
replications unless HDSELECT_MC_REPS is set; coverage bounds widen by two
binomial standard errors to match.
"""

import numpy as np
import pytest

from tests.conftest import mc_reps
from hdselect.dataset import standardize_matrix
from hdselect.inference import CHSVariant, HDProblem, run_chs, run_pds
from hdselect.ivhds import run_iv_lasso
from hdselect.regression_utils import SEMode
from hdselect.simulation import (
    heteroskedastic_dgp,
    iv_dgp,
    pds_dgp,
    sparse_coefficients,
    summarize_estimates,
    toeplitz_design,
)
from hdselect.solver import regularization_path
from hdselect.tuning import LoadingMode, TunerConfig, TuningMethod, rigorous_lambda, select_by_ic

NOMINAL = 0.95


def coverage_floor(reps: int, slack: float = 0.05) -> float:
    """Lowest acceptable empirical coverage for a nominal 95% interval."""
    return NOMINAL - slack - 2 * np.sqrt(NOMINAL * (1 - NOMINAL) / reps)


def coverage_ceiling(reps: int, upper: float) -> float:
    """Highest acceptable empirical coverage for a nominal 95% interval."""
    return upper + 2 * np.sqrt(NOMINAL * (1 - NOMINAL) / reps)


def problem_from(draw, instruments=False):
    """HDProblem with d as the single treatment and every column of X penalized."""
    kwargs = {}
    if instruments:
        kwargs = dict(
            instruments=draw.Z, instrument_names=draw.instrument_names(), endogenous=["d"]
        )
    return HDProblem(
        y=draw.y,
        treatments=draw.d,
        treatment_names=["d"],
        controls=draw.X,
        control_names=draw.control_names(),
        **kwargs,
    )


class TestDesigns:
    """Shapes and parameters of the generated data."""

    def test_sparse_coefficients(self):
        """Test the leading block of equal coefficients."""
        np.testing.assert_array_equal(sparse_coefficients(6, 2, 0.5), [0.5, 0.5, 0, 0, 0, 0])

    def test_toeplitz_correlation(self):
        """Test that neighbouring columns have correlation near rho."""
        X = toeplitz_design(20_000, 3, 0.5, np.random.default_rng(0))
        corr = np.corrcoef(X, rowvar=False)
        assert corr[0, 1] == pytest.approx(0.5, abs=0.03)
        assert corr[0, 2] == pytest.approx(0.25, abs=0.03)

    def test_pds_dgp_seeded(self):
        """Test that the same seed reproduces the draw."""
        a, b = pds_dgp(n=50, p=10, seed=1), pds_dgp(n=50, p=10, seed=1)
        np.testing.assert_array_equal(a.y, b.y)
        assert a.X.shape == (50, 10)
        assert a.alpha == 0.5

    def test_iv_dgp_shapes(self):
        """Test instrument block shape and first-stage coefficients."""
        draw = iv_dgp(n=40, n_instruments=7, n_relevant=2, strength=0.3, seed=2)
        assert draw.Z.shape == (40, 7)
        np.testing.assert_array_equal(draw.gamma, [0.3, 0.3, 0, 0, 0, 0, 0])
        assert draw.to_dataset().names[-1] == "z7"

    def test_summarize_estimates(self):
        """Test bias, RMSE and coverage on a hand-checked sample."""
        summary = summarize_estimates([0.9, 1.1, 1.4], [0.5, 0.8, 1.2], [1.2, 1.5, 1.6], 1.0)
        assert summary["median_bias"] == pytest.approx(0.1)
        assert summary["rmse"] == pytest.approx(np.sqrt((0.01 + 0.01 + 0.16) / 3))
        assert summary["coverage"] == pytest.approx(2 / 3)
        assert summary["ci_length"] == pytest.approx((0.7 + 0.7 + 0.4) / 3)


@pytest.mark.slow
class TestSelectionInferenceMonteCarlo:
    """Confounded design with N=100 and p=200 Toeplitz controls."""

    def test_pds_coverage_and_bias(self):
        """Test that PDS covers the truth and cuts the naive bias at least five-fold."""
        reps = mc_reps(20)
        pds, low, high, naive = [], [], [], []
        for rep in range(reps):
            draw = pds_dgp(n=100, p=200, seed=1000 + rep)
            result = run_pds(problem_from(draw), TunerConfig())
            ((lo, hi),) = result.conf_int(0.95)
            pds.append(result.alpha[0])
            low.append(lo)
            high.append(hi)
            naive.append(result.naive_alpha[0])

        summary = summarize_estimates(pds, low, high, 0.5)
        naive_bias = np.median(np.abs(np.asarray(naive) - 0.5))
        assert coverage_floor(reps) <= summary["coverage"] <= coverage_ceiling(reps, 0.975)
        assert summary["median_abs_bias"] < naive_bias / 5

    @pytest.mark.parametrize("variant", list(CHSVariant))
    def test_chs_close_to_pds(self, variant):
        """Test that partialling out lands within half a PDS standard error of PDS."""
        reps = mc_reps(10)
        gaps = []
        for rep in range(reps):
            draw = pds_dgp(n=100, p=200, seed=2000 + rep)
            problem = problem_from(draw)
            pds = run_pds(problem, TunerConfig())
            chs = run_chs(problem, variant, TunerConfig())
            gaps.append(abs(chs.alpha[0] - pds.alpha[0]) / pds.std_errors[0])

        assert np.median(gaps) < 0.5


@pytest.mark.slow
class TestInstrumentalVariablesMonteCarlo:
    """Many weak-to-moderate candidate instruments."""

    def test_iv_lasso_coverage_and_bias(self):
        """Test IV-LASSO interval coverage and its bias against OLS."""
        reps = mc_reps(20)
        iv, ols, low, high = [], [], [], []
        for rep in range(reps):
            draw = iv_dgp(n=200, n_instruments=50, n_relevant=3, strength=0.5, seed=3000 + rep)
            result = run_iv_lasso(problem_from(draw, instruments=True), TunerConfig())
            ((lo, hi),) = result.conf_int(0.95)
            iv.append(result.alpha[0])
            ols.append(result.naive_alpha[0])
            low.append(lo)
            high.append(hi)

        summary = summarize_estimates(iv, low, high, 1.0)
        ols_bias = np.median(np.abs(np.asarray(ols) - 1.0))
        assert coverage_floor(reps, slack=0.05) <= summary["coverage"]
        assert summary["coverage"] <= coverage_ceiling(reps, 0.98)
        assert summary["median_abs_bias"] < 0.5 * ols_bias


@pytest.mark.slow
class TestTuningMonteCarlo:
    """Penalty choice on repeated draws."""

    def test_bic_sparser_than_aic_on_noise(self):
        """Test that heavier information-criterion penalties never pick larger models."""
        reps = mc_reps(10)
        for rep in range(reps):
            rng = np.random.default_rng(4000 + rep)
            X = rng.standard_normal((100, 50))
            X = (X - X.mean(axis=0)) / X.std(axis=0)
            y = rng.standard_normal(100)
            y = y - y.mean()
            path = regularization_path(X, y, np.ones(50), n_points=30)
            sizes = {
                method: select_by_ic(path, X, y, method).fit.sparsity
                for method in (TuningMethod.AIC, TuningMethod.BIC, TuningMethod.EBIC)
            }
            assert sizes[TuningMethod.EBIC] <= sizes[TuningMethod.BIC] <= sizes[TuningMethod.AIC]

    def test_robust_errors_under_heteroskedasticity(self):
        """Test that robust intervals cover and are wider than iid ones under heteroskedasticity."""
        reps = mc_reps(20)
        low, high, estimates, iid_se, robust_se = [], [], [], [], []
        for rep in range(reps):
            draw = heteroskedastic_dgp(n=200, p=50, seed=5000 + rep)
            problem = HDProblem(
                y=draw.y,
                treatments=draw.X[:, 0],
                treatment_names=["x1"],
                controls=draw.X[:, 1:],
                control_names=draw.control_names()[1:],
            )
            robust = run_pds(problem, TunerConfig(), SEMode.ROBUST)
            iid = run_pds(problem, TunerConfig(), SEMode.IID)
            ((lo, hi),) = robust.conf_int(0.95)
            estimates.append(robust.alpha[0])
            low.append(lo)
            high.append(hi)
            robust_se.append(robust.std_errors[0])
            iid_se.append(iid.std_errors[0])

        summary = summarize_estimates(estimates, low, high, 1.0)
        assert summary["coverage"] >= coverage_floor(reps)
        assert np.mean(robust_se) > 1.3 * np.mean(iid_se)

    def test_robust_loadings_cut_false_positives(self):
        """Test that robust loadings pick the variance-driving noise column less often."""
        reps = mc_reps(40)
        hits = {LoadingMode.IID: 0, LoadingMode.ROBUST: 0}
        for rep in range(reps):
            draw = heteroskedastic_dgp(n=200, p=20, seed=6000 + rep, driver=19, power=3.0)
            X, _, _ = standardize_matrix(draw.X)
            y = draw.y - draw.y.mean()
            for mode in hits:
                if 19 in rigorous_lambda(X, y, mode=mode).fit.active_set:
                    hits[mode] += 1

        assert hits[LoadingMode.ROBUST] < hits[LoadingMode.IID]
