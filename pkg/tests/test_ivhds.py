"""Tests for IV-LASSO selection and two-stage least squares."""

import numpy as np
import pytest

from hdselect.inference import HDProblem, run_pds
from hdselect.ivhds import (
    FIRST_STAGE_LASSO,
    IVError,
    first_stage_stats,
    iv_lasso_select,
    run_iv_lasso,
    two_sls,
)
from hdselect.simulation import iv_dgp, pds_dgp
from hdselect.tuning import TunerConfig


@pytest.fixture
def iv_draw():
    """Endogenous treatment, 50 candidate instruments with 3 relevant."""
    return iv_dgp(n=200, n_instruments=50, n_relevant=3, strength=1.0, seed=21)


def iv_problem(draw):
    return HDProblem(
        y=draw.y,
        treatments=draw.d,
        treatment_names=["d"],
        controls=draw.X,
        control_names=draw.control_names(),
        instruments=draw.Z,
        instrument_names=draw.instrument_names(),
        endogenous=["d"],
    )


class TestTwoSLS:
    """Plain 2SLS."""

    def test_exactly_identified_ratio(self, rng):
        """Test the Wald ratio for one instrument and no controls."""
        n = 100
        z = rng.standard_normal(n)
        u = rng.standard_normal(n)
        d = 0.8 * z + u
        y = 1.5 * d + 0.6 * u + rng.standard_normal(n)
        result = two_sls(y, d, [True], np.empty((n, 0)), z)
        zc = z - z.mean()
        expected = (zc @ (y - y.mean())) / (zc @ (d - d.mean()))
        assert result.alpha[0] == pytest.approx(expected, abs=1e-10)
        assert result.endogenous == ["d1"]

    def test_matches_textbook_2sls(self, rng):
        """Test against explicit projection 2SLS with a control."""
        n = 150
        Z = rng.standard_normal((n, 3))
        w = rng.standard_normal(n)
        u = rng.standard_normal(n)
        d = Z @ np.array([0.7, 0.3, 0.0]) + 0.5 * w + u
        y = 2.0 * d - w + u + rng.standard_normal(n)
        result = two_sls(y, d, [True], w, Z)

        X = np.column_stack([d, w, np.ones(n)])
        instruments = np.column_stack([Z, w, np.ones(n)])
        P = instruments @ np.linalg.pinv(instruments)
        expected = np.linalg.solve(X.T @ P @ X, X.T @ P @ y)
        assert result.alpha[0] == pytest.approx(expected[0], abs=1e-8)

        resid = y - X @ expected
        s2 = resid @ resid / (n - 3)
        vcov = s2 * np.linalg.inv(X.T @ P @ X)
        assert result.std_errors[0] == pytest.approx(np.sqrt(vcov[0, 0]), rel=1e-8)

    def test_order_condition(self, rng):
        """Test that fewer instruments than endogenous variables raises."""
        n = 30
        D = rng.standard_normal((n, 2))
        with pytest.raises(IVError, match="Order condition"):
            two_sls(rng.standard_normal(n), D, [True, True], np.empty((n, 0)), D[:, 0])

    def test_exogenous_only_is_ols(self, rng):
        """Test that with no endogenous columns 2SLS is OLS."""
        n = 40
        d = rng.standard_normal(n)
        y = 3.0 * d + rng.standard_normal(n)
        result = two_sls(y, d, [False], np.empty((n, 0)), np.empty((n, 0)))
        slope = np.cov(d, y, bias=True)[0, 1] / np.var(d)
        assert result.alpha[0] == pytest.approx(slope, abs=1e-10)


class TestFirstStage:
    """First-stage diagnostics."""

    def test_partial_f_single_instrument(self, rng):
        """Test that with one instrument and no controls F equals t squared."""
        n = 120
        z = rng.standard_normal(n)
        d = 0.4 * z + rng.standard_normal(n)
        _, stats = first_stage_stats(d, z[:, None], np.empty((n, 0)), ["z"])
        design = np.column_stack([z, np.ones(n)])
        coef, *_ = np.linalg.lstsq(design, d, rcond=None)
        resid = d - design @ coef
        s2 = resid @ resid / (n - 2)
        t = coef[0] / np.sqrt(s2 * np.linalg.inv(design.T @ design)[0, 0])
        assert stats.partial_f == pytest.approx(t**2, rel=1e-8)
        assert stats.instruments == ["z"]
        assert stats.n_selected == 1


class TestIVLasso:
    """Full IV-LASSO pipeline."""

    def test_selects_relevant_instruments(self, iv_draw):
        """Test that strong instruments are picked in Step II."""
        problem = iv_problem(iv_draw)
        selection = iv_lasso_select(
            problem.partialled(problem.y),
            problem.partialled(problem.treatments),
            problem.endogenous_mask,
            problem.partialled(problem.controls),
            problem.partialled(problem.instruments),
            TunerConfig(),
            problem.treatment_names,
            problem.control_names,
            problem.instrument_names,
        )
        assert {"z1", "z2", "z3"} <= set(selection.instruments["d"])

    def test_run_reports_first_stage(self, iv_draw):
        """Test that the result carries selected instruments and partial F."""
        result = run_iv_lasso(iv_problem(iv_draw), TunerConfig())
        assert result.endogenous == ["d"]
        assert result.estimator == "2SLS"
        assert {"z1", "z2", "z3"} <= set(result.selected_instruments["d"])
        assert result.first_stage["d"].partial_f > 10
        assert result.naive_alpha is not None

    def test_lasso_first_stage_close_to_post(self, iv_draw):
        """Test that both first-stage variants land near the true coefficient."""
        post = run_iv_lasso(iv_problem(iv_draw), TunerConfig())
        lasso = run_iv_lasso(iv_problem(iv_draw), TunerConfig(), first_stage=FIRST_STAGE_LASSO)
        assert abs(post.alpha[0] - iv_draw.alpha) < 4 * post.std_errors[0]
        assert abs(lasso.alpha[0] - iv_draw.alpha) < 4 * lasso.std_errors[0]

    def test_zero_penalty_matches_plain_2sls(self):
        """Test that with every candidate kept IV-LASSO equals 2SLS on the full sets."""
        draw = iv_dgp(n=120, n_instruments=4, n_relevant=2, strength=1.0, p=3, seed=4)
        problem = iv_problem(draw)
        tuner = TunerConfig(fixed_lambda=0.0, tol=1e-13, kkt_tol=1e-10)
        result = run_iv_lasso(problem, tuner)
        plain = two_sls(draw.y, draw.d, [True], draw.X, draw.Z)
        assert result.alpha[0] == pytest.approx(plain.alpha[0], abs=1e-8)

    def test_no_instrument_survives(self, iv_draw):
        """Test the error when selection keeps no instrument."""
        with pytest.raises(IVError, match="No instruments survived selection for 'd'"):
            run_iv_lasso(iv_problem(iv_draw), TunerConfig(fixed_lambda=1e8))

    def test_unpenalized_instrument_keeps_estimation_alive(self, iv_draw):
        """Test that an unpenalized instrument is enough when nothing is selected."""
        problem = HDProblem(
            y=iv_draw.y,
            treatments=iv_draw.d,
            treatment_names=["d"],
            controls=iv_draw.X,
            control_names=iv_draw.control_names(),
            instruments=iv_draw.Z[:, 1:],
            instrument_names=iv_draw.instrument_names()[1:],
            instruments_unpenalized=iv_draw.Z[:, 0],
            instruments_unpenalized_names=["z1"],
            endogenous=["d"],
        )
        result = run_iv_lasso(problem, TunerConfig(fixed_lambda=1e8))
        assert result.first_stage["d"].instruments == ["z1"]

    def test_zero_endogenous_reduces_to_pds(self):
        """Test that without endogenous variables IV-LASSO reproduces PDS exactly."""
        draw = pds_dgp(n=100, p=40, seed=8)
        problem = HDProblem(
            y=draw.y,
            treatments=draw.d,
            treatment_names=["d"],
            controls=draw.X,
            control_names=draw.control_names(),
        )
        iv = run_iv_lasso(problem, TunerConfig())
        pds = run_pds(problem, TunerConfig())
        np.testing.assert_allclose(iv.alpha, pds.alpha, rtol=0, atol=1e-12)
        np.testing.assert_allclose(iv.std_errors, pds.std_errors, rtol=0, atol=1e-12)
        assert iv.selected_step1 == pds.selected_step1
        assert iv.union_controls == pds.union_controls
