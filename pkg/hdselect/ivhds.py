"""IV-LASSO: LASSO selection of controls and instruments followed by 2SLS.

Step I selects controls for the outcome. Step II selects, for every
endogenous variable, among controls and excluded instruments jointly (and
for every exogenous treatment among controls only). The structural
equation is then estimated by two-stage least squares with the union of
selected controls in both stages and the selected instruments excluded.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import statsmodels.api as sm

from hdselect.errors import HDSError
from hdselect.inference import (
    EquationSelection,
    HDProblem,
    PDSResult,
    final_controls,
    final_regression,
    naive_ols,
    ordered_map,
    select_equation,
    standardized_design,
    union_of_selected,
)
from hdselect.logging_setup import get_logger
from hdselect.regression_utils import SEMode, independent_columns
from hdselect.tuning import TunerConfig

logger = get_logger()

FIRST_STAGE_POST = "post"
FIRST_STAGE_LASSO = "lasso"
FIRST_STAGE_MODES = (FIRST_STAGE_POST, FIRST_STAGE_LASSO)


class IVError(HDSError):
    """Raised when the instrumental-variables estimate cannot be computed."""

    module = "ivhds"
    numeric = True


@dataclass
class FirstStage:
    """First-stage diagnostics of one endogenous variable."""

    partial_f: float
    n_selected: int
    instruments: List[str]
    coefficients: Dict[str, float] = field(default_factory=dict)


@dataclass
class IVSelection:
    """Controls and instruments chosen by the two selection steps."""

    step1: EquationSelection
    step2: Dict[str, EquationSelection]
    controls: Dict[str, List[str]]
    instruments: Dict[str, List[str]]

    @property
    def selected_controls(self) -> List[str]:
        """Controls selected in any step, first-seen order."""
        names = list(self.step1.selected)
        for chosen in self.controls.values():
            names.extend(chosen)
        return list(dict.fromkeys(names))


@dataclass
class IVResult(PDSResult):
    """2SLS estimate on the selected controls and instruments.

    ``alpha`` holds every treatment coefficient; ``endogenous`` names the
    instrumented ones.
    """

    endogenous: List[str] = field(default_factory=list)
    selected_controls: List[str] = field(default_factory=list)
    selected_instruments: Dict[str, List[str]] = field(default_factory=dict)
    first_stage: Dict[str, FirstStage] = field(default_factory=dict)
    estimator: str = "2SLS"


def iv_lasso_select(
    y: np.ndarray,
    D: np.ndarray,
    endogenous_mask: np.ndarray,
    X_hd: np.ndarray,
    Z_hd: np.ndarray,
    tuner: TunerConfig,
    treatment_names: Sequence[str],
    control_names: Sequence[str],
    instrument_names: Sequence[str],
    unpenalized: Optional[np.ndarray] = None,
    unpenalized_names: Sequence[str] = (),
    instruments_unpenalized: Optional[np.ndarray] = None,
    instruments_unpenalized_names: Sequence[str] = (),
    threads: int = 1,
    dependent_name: str = "y",
) -> IVSelection:
    """Selection steps of IV-LASSO on partialled-out inputs.

    Step I is LASSO(y ~ controls). Step II is LASSO(d ~ controls) for each
    exogenous treatment and LASSO(d ~ [controls, instruments]) for each
    endogenous one, whose active set is split into its control and
    instrument parts.

    Returns:
        IVSelection with per-step selections by name
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    D = np.asarray(D, dtype=float).reshape(n, -1)
    X_hd = np.asarray(X_hd, dtype=float).reshape(n, -1)
    Z_hd = np.asarray(Z_hd, dtype=float).reshape(n, -1)
    unpen = np.empty((n, 0)) if unpenalized is None else np.asarray(unpenalized).reshape(n, -1)
    z_unpen = (
        np.empty((n, 0))
        if instruments_unpenalized is None
        else np.asarray(instruments_unpenalized).reshape(n, -1)
    )

    controls_design = standardized_design(X_hd, control_names, unpen, unpenalized_names)
    joint_design = standardized_design(
        np.hstack([X_hd, Z_hd]),
        list(control_names) + list(instrument_names),
        np.hstack([unpen, z_unpen]),
        list(unpenalized_names) + list(instruments_unpenalized_names),
    )

    step1 = select_equation(y, controls_design, tuner, dependent_name)

    def step2(k: int) -> EquationSelection:
        design = joint_design if endogenous_mask[k] else controls_design
        return select_equation(D[:, k], design, tuner, treatment_names[k])

    selections = ordered_map(step2, list(range(D.shape[1])), threads)
    instrument_set = set(instrument_names)
    controls: Dict[str, List[str]] = {}
    instruments: Dict[str, List[str]] = {}
    for k, sel in enumerate(selections):
        name = treatment_names[k]
        controls[name] = [v for v in sel.selected if v not in instrument_set]
        if endogenous_mask[k]:
            instruments[name] = [v for v in sel.selected if v in instrument_set]
            logger.info(
                f"Step II for '{name}': {len(instruments[name])} instruments, "
                f"{len(controls[name])} controls"
            )
    return IVSelection(step1, dict(zip(treatment_names, selections)), controls, instruments)


def first_stage_stats(
    d: np.ndarray,
    Z: np.ndarray,
    exog: np.ndarray,
    instrument_names: Sequence[str],
    intercept: bool = True,
    absorbed_dof: int = 0,
) -> Tuple[np.ndarray, FirstStage]:
    """First-stage OLS of one endogenous variable and its partial F statistic.

    The F statistic is the homoskedastic Wald test that the excluded
    instruments are jointly zero in the regression on [Z, exogenous
    regressors], with absorbed parameters removed from its denominator
    degrees of freedom.

    Returns:
        (fitted values, FirstStage)
    """
    n = d.shape[0]
    full = np.hstack([Z, exog] + ([np.ones((n, 1))] if intercept else []))
    keep = independent_columns(full)
    full = full[:, keep]
    kept_z = [j for j in keep if j < Z.shape[1]]
    q = len(kept_z)
    results = sm.OLS(d, full).fit()
    coef = np.asarray(results.params, dtype=float)
    fitted = full @ coef

    dof = n - full.shape[1] - absorbed_dof
    if q == 0 or dof <= 0 or results.ssr <= 0:
        partial_f = float("nan")
    else:
        # kept instrument columns lead the design
        wald = results.f_test(np.eye(full.shape[1])[:q])
        partial_f = float(np.squeeze(wald.fvalue)) * dof / results.df_resid
    names = [instrument_names[j] for j in kept_z]
    stats = FirstStage(
        partial_f=float(partial_f),
        n_selected=q,
        instruments=names,
        coefficients={name: float(coef[i]) for i, name in enumerate(names)},
    )
    return fitted, stats


def two_sls(
    y: np.ndarray,
    D: np.ndarray,
    endogenous_mask: np.ndarray,
    W: np.ndarray,
    Z: np.ndarray,
    se_mode: SEMode = SEMode.IID,
    clusters: Optional[np.ndarray] = None,
    treatment_names: Sequence[str] = (),
    control_names: Sequence[str] = (),
    instrument_names: Sequence[str] = (),
    intercept: bool = True,
    absorbed_dof: int = 0,
    fitted_override: Optional[Dict[str, np.ndarray]] = None,
) -> IVResult:
    """Two-stage least squares of y on [D, W, constant] instrumenting the endogenous D.

    Exogenous treatments and the controls W enter both stages. Each
    endogenous column is instrumented by its first-stage fitted values,
    unless ``fitted_override`` supplies an instrument for it. The first-stage
    fits are projections on [Z, W, constant], so this reproduces 2SLS with Z
    excluded.

    Args:
        y: Outcome
        D: All treatment columns
        endogenous_mask: Which columns of D are endogenous
        W: Exogenous controls of the structural equation
        Z: Excluded instruments
        se_mode: Variance estimator
        clusters: Cluster labels for CLUSTER
        treatment_names: Names of the columns of D
        control_names: Names of the columns of W
        instrument_names: Names of the columns of Z
        intercept: Include a constant in both stages
        absorbed_dof: Degrees of freedom absorbed earlier
        fitted_override: Replacement first-stage fits by endogenous name

    Returns:
        IVResult

    Raises:
        IVError: When the order condition fails or the system is singular
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    D = np.asarray(D, dtype=float).reshape(n, -1)
    W = np.asarray(W, dtype=float).reshape(n, -1)
    Z = np.asarray(Z, dtype=float).reshape(n, -1)
    mask = np.asarray(endogenous_mask, dtype=bool)
    treatment_names = list(treatment_names) or [f"d{k + 1}" for k in range(D.shape[1])]
    instrument_names = list(instrument_names) or [f"z{k + 1}" for k in range(Z.shape[1])]
    n_endog = int(mask.sum())
    if Z.shape[1] < n_endog:
        raise IVError(
            f"Order condition fails: {Z.shape[1]} instruments for {n_endog} endogenous variables"
        )

    exog = np.hstack([D[:, ~mask], W])
    fitted_D = D.copy()
    first: Dict[str, FirstStage] = {}
    for k in np.flatnonzero(mask):
        name = treatment_names[k]
        fitted, stats = first_stage_stats(
            D[:, k], Z, exog, instrument_names, intercept, absorbed_dof
        )
        first[name] = stats
        if fitted_override and name in fitted_override:
            fitted = fitted_override[name]
        fitted_D[:, k] = fitted
        logger.info(f"First stage for '{name}': partial F = {stats.partial_f:.4g}")

    try:
        alpha, vcov, nuisance, dof = final_regression(
            y,
            D,
            W,
            se_mode,
            clusters,
            treatment_names,
            control_names,
            intercept,
            absorbed_dof,
            endogenous=[treatment_names[k] for k in np.flatnonzero(mask)],
            instruments=fitted_D[:, mask],
        )
    except HDSError as e:
        raise IVError(str(e)) from e

    endog_names = [treatment_names[k] for k in np.flatnonzero(mask)]
    return IVResult(
        treatment_names=treatment_names,
        alpha=alpha,
        vcov=vcov,
        se_mode=se_mode,
        selected_step1=[],
        selected_step2={},
        union_controls=[t for t in treatment_names if t not in set(endog_names)]
        + list(control_names),
        n_used=n,
        dof=dof,
        nuisance=nuisance,
        endogenous=endog_names,
        selected_controls=list(control_names),
        selected_instruments={name: list(first[name].instruments) for name in endog_names},
        first_stage=first,
    )


def _lasso_first_stage(
    problem: HDProblem, selection: IVSelection, D_partialled: np.ndarray
) -> Dict[str, np.ndarray]:
    """Endogenous variables minus their Step II LASSO residuals, in original units."""
    out: Dict[str, np.ndarray] = {}
    for k, name in enumerate(problem.treatment_names):
        if name not in selection.instruments:
            continue
        sel = selection.step2[name]
        centered = D_partialled[:, k] - D_partialled[:, k].mean()
        resid = centered - sel.fitted if sel.fitted is not None else centered
        out[name] = problem.treatments[:, k] - resid
    return out


def run_iv_lasso(
    problem: HDProblem,
    tuner: TunerConfig,
    se_mode: SEMode = SEMode.IID,
    first_stage: str = FIRST_STAGE_POST,
    threads: int = 1,
) -> IVResult:
    """Full IV-LASSO pipeline on a problem.

    With no endogenous variables this reduces to post-double-selection.

    Args:
        problem: Estimation problem with instruments
        tuner: Penalty settings of every selection LASSO
        se_mode: Variance estimator
        first_stage: "post" (OLS on the selected instruments) or "lasso"
            (Step II LASSO fitted values as the instrument)
        threads: Worker count for the Step II LASSOs

    Raises:
        IVError: If an endogenous variable keeps no instrument after selection
    """
    if first_stage not in FIRST_STAGE_MODES:
        raise IVError(f"Unknown first-stage mode '{first_stage}'")
    mask = problem.endogenous_mask
    D_p = problem.partialled(problem.treatments)
    selection = iv_lasso_select(
        problem.partialled(problem.y),
        D_p,
        mask,
        problem.partialled(problem.controls),
        problem.partialled(problem.instruments),
        tuner,
        problem.treatment_names,
        problem.control_names,
        problem.instrument_names,
        problem.partialled(problem.controls_unpenalized),
        problem.controls_unpenalized_names,
        problem.partialled(problem.instruments_unpenalized),
        problem.instruments_unpenalized_names,
        threads=threads,
        dependent_name=problem.dependent_name,
    )

    for name, chosen in selection.instruments.items():
        if not chosen and not problem.instruments_unpenalized_names:
            raise IVError(
                f"No instruments survived selection for '{name}'; the instruments may be "
                "weak or irrelevant, and estimates from so few instruments would be unreliable"
            )

    selected = union_of_selected(problem.control_names, selection.selected_controls)
    W, w_names = final_controls(problem, selected)
    chosen_instruments = union_of_selected(
        problem.instrument_names, *selection.instruments.values()
    )
    index = {name: j for j, name in enumerate(problem.instrument_names)}
    z_cols = [problem.instruments[:, index[name]] for name in chosen_instruments]
    z_cols.extend(
        problem.instruments_unpenalized[:, j]
        for j in range(problem.instruments_unpenalized.shape[1])
    )
    Z = np.column_stack(z_cols) if z_cols else np.empty((problem.n, 0))
    z_names = chosen_instruments + list(problem.instruments_unpenalized_names)

    override = (
        _lasso_first_stage(problem, selection, D_p) if first_stage == FIRST_STAGE_LASSO else None
    )
    result = two_sls(
        problem.y,
        problem.treatments,
        mask,
        W,
        Z,
        se_mode,
        problem.clusters,
        problem.treatment_names,
        w_names,
        z_names,
        intercept=problem.intercept,
        absorbed_dof=problem.absorbed_dof,
        fitted_override=override,
    )
    result.selected_step1 = selection.step1.selected
    result.selected_step2 = {name: sel.selected for name, sel in selection.step2.items()}
    result.selected_controls = selected
    result.steps = {f"step1:{selection.step1.target}": selection.step1}
    result.steps.update({f"step2:{name}": sel for name, sel in selection.step2.items()})
    result.naive_alpha = naive_ols(problem)
    return result
