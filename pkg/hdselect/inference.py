"""Treatment-effect inference with many controls: post-double-selection and partialling-out.

The selection LASSOs run on standardized controls after the columns in
``partial`` (and the constant) have been partialled out of every variable.
The final regressions use the variables in their original units and
reintroduce the partialled columns explicitly.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from scipy.stats import norm

from hdselect.dataset import Dataset, standardize
from hdselect.errors import HDSError
from hdselect.logging_setup import get_logger
from hdselect.postsel import post_lasso_ols
from hdselect.regression_utils import (
    RegressionError,
    SEMode,
    fit_iv,
    fit_ols,
    independent_columns,
    ols,
    residualize,
)
from hdselect.tuning import TunerConfig, TuningError, TuningResult, tune_lasso

logger = get_logger()

T = TypeVar("T")
R = TypeVar("R")


class InferenceError(HDSError):
    """Raised when a treatment effect cannot be estimated."""

    module = "inference"
    numeric = True


class CHSVariant(Enum):
    """Which control fit orthogonalizes y and the treatments."""

    LASSO = "lasso_orthogonalized"
    POST_LASSO = "post_lasso_orthogonalized"


def _as_matrix(values: Optional[np.ndarray], n: int) -> np.ndarray:
    if values is None:
        return np.empty((n, 0))
    values = np.asarray(values, dtype=float)
    return values.reshape(n, -1) if values.size else np.empty((n, 0))


def ordered_map(func: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """Map over items, concurrently when threads > 1, returning results in input order."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(func, items))
    return [func(item) for item in items]


@dataclass
class HDProblem:
    """Arrays and names of one estimation problem.

    ``controls`` are penalized controls; ``controls_unpenalized`` enter the
    selection LASSOs with zero loading; ``partial`` columns are partialled
    out before selection; ``amelioration`` columns only join the final
    regression. ``endogenous`` names a subset of ``treatment_names``.
    """

    y: np.ndarray
    treatments: np.ndarray
    treatment_names: List[str]
    controls: Optional[np.ndarray] = None
    control_names: List[str] = field(default_factory=list)
    controls_unpenalized: Optional[np.ndarray] = None
    controls_unpenalized_names: List[str] = field(default_factory=list)
    partial: Optional[np.ndarray] = None
    partial_names: List[str] = field(default_factory=list)
    amelioration: Optional[np.ndarray] = None
    amelioration_names: List[str] = field(default_factory=list)
    instruments: Optional[np.ndarray] = None
    instrument_names: List[str] = field(default_factory=list)
    instruments_unpenalized: Optional[np.ndarray] = None
    instruments_unpenalized_names: List[str] = field(default_factory=list)
    endogenous: List[str] = field(default_factory=list)
    clusters: Optional[np.ndarray] = None
    intercept: bool = True
    absorbed_dof: int = 0
    dependent_name: str = "y"

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float).ravel()
        n = self.y.shape[0]
        self.treatments = _as_matrix(self.treatments, n)
        self.controls = _as_matrix(self.controls, n)
        self.controls_unpenalized = _as_matrix(self.controls_unpenalized, n)
        self.partial = _as_matrix(self.partial, n)
        self.amelioration = _as_matrix(self.amelioration, n)
        self.instruments = _as_matrix(self.instruments, n)
        self.instruments_unpenalized = _as_matrix(self.instruments_unpenalized, n)
        blocks = [
            (self.treatments, self.treatment_names, "treatments"),
            (self.controls, self.control_names, "controls"),
            (self.controls_unpenalized, self.controls_unpenalized_names, "controls_unpenalized"),
            (self.partial, self.partial_names, "partial"),
            (self.amelioration, self.amelioration_names, "amelioration"),
            (self.instruments, self.instrument_names, "instruments"),
            (
                self.instruments_unpenalized,
                self.instruments_unpenalized_names,
                "instruments_unpenalized",
            ),
        ]
        for matrix, names, label in blocks:
            if matrix.shape[1] != len(names):
                raise InferenceError(
                    f"{label}: {matrix.shape[1]} columns but {len(names)} names"
                )
        unknown = set(self.endogenous) - set(self.treatment_names)
        if unknown:
            raise InferenceError(f"Endogenous variables {sorted(unknown)} are not treatments")

    @property
    def n(self) -> int:
        """Number of observations."""
        return self.y.shape[0]

    @property
    def endogenous_mask(self) -> np.ndarray:
        """Boolean mask over treatments marking endogenous ones."""
        endog = set(self.endogenous)
        return np.array([name in endog for name in self.treatment_names], dtype=bool)

    def partialled(self, matrix: np.ndarray) -> np.ndarray:
        """Residualize a vector or matrix on the partial columns and the constant."""
        return residualize(matrix, self.partial, intercept=self.intercept)

    @classmethod
    def from_dataset(
        cls,
        ds: Dataset,
        dependent: str,
        treatments: Sequence[str],
        controls: Sequence[str] = (),
        controls_unpenalized: Sequence[str] = (),
        partial: Sequence[str] = (),
        amelioration: Sequence[str] = (),
        instruments: Sequence[str] = (),
        instruments_unpenalized: Sequence[str] = (),
        endogenous: Sequence[str] = (),
        cluster: Optional[str] = None,
        intercept: bool = True,
        absorbed_dof: int = 0,
    ) -> "HDProblem":
        """Collect the named columns of a dataset into a problem."""
        clusters = None
        if cluster is not None:
            clusters = ds.column(cluster)
            if ds.is_categorical(cluster):
                clusters = clusters.astype(str)
        return cls(
            y=ds.numeric(dependent),
            treatments=ds.matrix(list(treatments)),
            treatment_names=list(treatments),
            controls=ds.matrix(list(controls)),
            control_names=list(controls),
            controls_unpenalized=ds.matrix(list(controls_unpenalized)),
            controls_unpenalized_names=list(controls_unpenalized),
            partial=ds.matrix(list(partial)),
            partial_names=list(partial),
            amelioration=ds.matrix(list(amelioration)),
            amelioration_names=list(amelioration),
            instruments=ds.matrix(list(instruments)),
            instrument_names=list(instruments),
            instruments_unpenalized=ds.matrix(list(instruments_unpenalized)),
            instruments_unpenalized_names=list(instruments_unpenalized),
            endogenous=list(endogenous),
            clusters=clusters,
            intercept=intercept,
            absorbed_dof=absorbed_dof,
            dependent_name=dependent,
        )


@dataclass
class EquationSelection:
    """Outcome of one selection LASSO."""

    target: str
    selected: List[str]
    tuning: Optional[TuningResult] = None
    column_names: List[str] = field(default_factory=list)
    fitted: Optional[np.ndarray] = None

    @property
    def lam(self) -> Optional[float]:
        """Penalty level used, if a LASSO ran."""
        return None if self.tuning is None else self.tuning.chosen_lambda

    def loadings_by_name(self) -> Dict[str, float]:
        """Penalty loading per column."""
        if self.tuning is None:
            return {}
        return {n: float(v) for n, v in zip(self.column_names, self.tuning.loadings)}


@dataclass
class StandardizedDesign:
    """Selection design in standardized units."""

    X: np.ndarray
    names: List[str]
    unpenalized: List[int]


def standardized_design(
    penalized: np.ndarray,
    penalized_names: Sequence[str],
    unpenalized: Optional[np.ndarray] = None,
    unpenalized_names: Sequence[str] = (),
) -> StandardizedDesign:
    """Standardize penalized columns followed by unpenalized ones.

    Constant penalized columns raise; constant unpenalized ones are dropped.
    """
    n = penalized.shape[0]
    unpen = _as_matrix(unpenalized, n)
    names = list(penalized_names) + list(unpenalized_names)
    if not names:
        return StandardizedDesign(np.empty((n, 0)), [], [])
    ds = Dataset(dict(zip(names, np.hstack([penalized, unpen]).T)))
    std, record = standardize(ds, names, penalized=penalized_names)
    kept = record.regressors
    free = set(unpenalized_names)
    return StandardizedDesign(
        X=std.matrix(kept),
        names=kept,
        unpenalized=[i for i, name in enumerate(kept) if name in free],
    )


def select_equation(
    target: np.ndarray,
    design: StandardizedDesign,
    tuner: TunerConfig,
    label: str,
) -> EquationSelection:
    """Run one selection LASSO and report the selected penalized columns by name."""
    n_penalized = len(design.names) - len(design.unpenalized)
    centered = target - target.mean()
    if n_penalized == 0:
        fitted = design.X @ ols(design.X, centered) if design.names else np.zeros_like(centered)
        return EquationSelection(label, [], None, design.names, fitted)
    try:
        result = tune_lasso(design.X, centered, tuner, unpenalized=design.unpenalized)
    except TuningError as e:
        raise TuningError(f"selection step '{label}': {e}") from e
    fit = result.fit
    free = set(design.unpenalized)
    selected = [design.names[j] for j in fit.active_set if j not in free]
    logger.info(f"Selection for '{label}': {len(selected)} of {n_penalized} controls")
    return EquationSelection(label, selected, result, design.names, design.X @ fit.coefficients)


@dataclass
class PDSSelection:
    """Controls selected in the outcome equation and in each treatment equation."""

    step1: EquationSelection
    step2: Dict[str, EquationSelection]

    @property
    def selected_step1(self) -> List[str]:
        """Controls selected in the outcome equation."""
        return self.step1.selected

    @property
    def selected_step2(self) -> Dict[str, List[str]]:
        """Controls selected in each treatment equation."""
        return {name: sel.selected for name, sel in self.step2.items()}


def pds_select(
    y: np.ndarray,
    D: np.ndarray,
    X_hd: np.ndarray,
    tuner: TunerConfig,
    treatment_names: Sequence[str],
    control_names: Sequence[str],
    unpenalized: Optional[np.ndarray] = None,
    unpenalized_names: Sequence[str] = (),
    threads: int = 1,
    dependent_name: str = "y",
) -> PDSSelection:
    """LASSO of y on the controls, then of each treatment on the controls.

    Any partialled-out columns must already be removed from y, D and X_hd.

    Returns:
        PDSSelection with the selected control names of every step
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    D = _as_matrix(D, n)
    X_hd = _as_matrix(X_hd, n)
    design = standardized_design(X_hd, control_names, unpenalized, unpenalized_names)

    step1 = select_equation(y, design, tuner, dependent_name)
    step2_list = ordered_map(
        lambda k: select_equation(D[:, k], design, tuner, treatment_names[k]),
        list(range(D.shape[1])),
        threads,
    )
    return PDSSelection(step1, dict(zip(treatment_names, step2_list)))


@dataclass
class PDSResult:
    """Post-double-selection estimate of the treatment coefficients.

    ``union_controls`` lists every exogenous regressor of the final
    regression: focal treatments, selected controls, unpenalized and
    partialled controls and the amelioration set.
    """

    treatment_names: List[str]
    alpha: np.ndarray
    vcov: np.ndarray
    se_mode: SEMode
    selected_step1: List[str]
    selected_step2: Dict[str, List[str]]
    union_controls: List[str]
    n_used: int
    dof: int
    nuisance: Dict[str, float] = field(default_factory=dict)
    steps: Dict[str, EquationSelection] = field(default_factory=dict)
    naive_alpha: Optional[np.ndarray] = None

    @property
    def std_errors(self) -> np.ndarray:
        """Standard errors of alpha."""
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    @property
    def t_stats(self) -> np.ndarray:
        """t statistics of alpha."""
        se = self.std_errors
        return np.divide(self.alpha, se, out=np.full_like(self.alpha, np.nan), where=se > 0)

    def conf_int(self, level: float = 0.95) -> np.ndarray:
        """Normal-approximation confidence intervals, one row per treatment."""
        z = norm.ppf(0.5 + level / 2.0)
        se = self.std_errors
        return np.column_stack([self.alpha - z * se, self.alpha + z * se])


@dataclass
class CHSResult(PDSResult):
    """Partialling-out estimate of the treatment coefficients."""

    variant: CHSVariant = CHSVariant.POST_LASSO


def final_regression(
    y: np.ndarray,
    D: np.ndarray,
    W: np.ndarray,
    se_mode: SEMode,
    clusters: Optional[np.ndarray],
    treatment_names: Sequence[str],
    control_names: Sequence[str],
    intercept: bool,
    absorbed_dof: int,
    endogenous: Sequence[str] = (),
    instruments: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, Dict[str, float], int]:
    """OLS of y on [D, W, constant], or 2SLS when some treatments are endogenous.

    Endogenous treatments are instrumented by ``instruments``; every other
    column is exogenous.

    Returns (treatment coefficients, their variance block, nuisance
    coefficients by name, residual degrees of freedom).
    """
    n = y.shape[0]
    blocks = [D, W] + ([np.ones((n, 1))] if intercept else [])
    names = list(treatment_names) + list(control_names) + (["_cons"] if intercept else [])
    X = np.hstack(blocks)
    keep = independent_columns(X, names)
    k_d = D.shape[1]
    lost = [treatment_names[j] for j in range(k_d) if j not in keep]
    if lost:
        raise InferenceError(f"Treatments {lost} are collinear with the controls")
    if n <= len(keep) + absorbed_dof:
        raise InferenceError(
            f"Insufficient degrees of freedom: {len(keep)} regressors for {n} rows"
        )
    X = X[:, keep]
    kept_names = [names[j] for j in keep]
    if clusters is not None and se_mode is SEMode.CLUSTER and np.unique(clusters).size < 2:
        raise InferenceError("Cluster-robust standard errors need at least two clusters")

    try:
        if endogenous:
            coef, vcov, _ = fit_iv(
                X, y, kept_names, endogenous, instruments, se_mode, clusters, absorbed_dof
            )
        else:
            coef, vcov, _ = fit_ols(X, y, se_mode, clusters, absorbed_dof)
    except RegressionError as e:
        raise InferenceError(str(e)) from e

    nuisance = {name: float(c) for name, c in zip(kept_names[k_d:], coef[k_d:])}
    return coef[:k_d], vcov[:k_d, :k_d], nuisance, n - len(keep) - absorbed_dof


def pds_estimate(
    y: np.ndarray,
    D: np.ndarray,
    W: np.ndarray,
    se_mode: SEMode = SEMode.IID,
    clusters: Optional[np.ndarray] = None,
    treatment_names: Sequence[str] = (),
    control_names: Sequence[str] = (),
    intercept: bool = True,
    absorbed_dof: int = 0,
    selection: Optional[PDSSelection] = None,
) -> PDSResult:
    """Final OLS of y on the treatments, the union of controls and a constant.

    Args:
        y: Outcome in original units
        D: Treatment columns
        W: Union of selected, unpenalized and amelioration controls
        se_mode: IID, ROBUST (HC1) or CLUSTER (CRVE) variance
        clusters: Cluster labels for CLUSTER
        treatment_names: Names of the treatment columns
        control_names: Names of the columns of W
        intercept: Include a constant
        absorbed_dof: Degrees of freedom absorbed earlier (fixed effects, partialling)
        selection: Selection record to attach to the result

    Returns:
        PDSResult
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    D = _as_matrix(D, n)
    W = _as_matrix(W, n)
    treatment_names = list(treatment_names) or [f"d{k + 1}" for k in range(D.shape[1])]
    control_names = list(control_names) or [f"w{k + 1}" for k in range(W.shape[1])]
    alpha, vcov, nuisance, dof = final_regression(
        y, D, W, se_mode, clusters, treatment_names, control_names, intercept, absorbed_dof
    )
    return PDSResult(
        treatment_names=treatment_names,
        alpha=alpha,
        vcov=vcov,
        se_mode=se_mode,
        selected_step1=selection.selected_step1 if selection else [],
        selected_step2=selection.selected_step2 if selection else {},
        union_controls=_exogenous_union(treatment_names, [], control_names),
        n_used=n,
        dof=dof,
        nuisance=nuisance,
        steps=_steps_of(selection),
    )


def _steps_of(selection: Optional[PDSSelection]) -> Dict[str, EquationSelection]:
    if selection is None:
        return {}
    steps = {f"step1:{selection.step1.target}": selection.step1}
    steps.update({f"step2:{name}": sel for name, sel in selection.step2.items()})
    return steps


def _exogenous_union(
    treatment_names: Sequence[str], endogenous: Sequence[str], control_names: Sequence[str]
) -> List[str]:
    endog = set(endogenous)
    focal = [t for t in treatment_names if t not in endog]
    return list(dict.fromkeys(focal + list(control_names)))


def union_of_selected(
    control_names: Sequence[str], *selected_lists: Sequence[str]
) -> List[str]:
    """Selected controls from all steps, in the original control order."""
    chosen = set()
    for names in selected_lists:
        chosen.update(names)
    return [name for name in control_names if name in chosen]


def final_controls(problem: HDProblem, selected: Sequence[str]) -> Tuple[np.ndarray, List[str]]:
    """Design of the final regression's controls.

    Order: selected penalized controls, unpenalized controls, partialled
    columns, amelioration set.
    """
    index = {name: j for j, name in enumerate(problem.control_names)}
    cols = [problem.controls[:, index[name]] for name in selected]
    names = list(selected)
    for matrix, block_names in (
        (problem.controls_unpenalized, problem.controls_unpenalized_names),
        (problem.partial, problem.partial_names),
        (problem.amelioration, problem.amelioration_names),
    ):
        cols.extend(matrix[:, j] for j in range(matrix.shape[1]))
        names.extend(block_names)
    if not cols:
        return np.empty((problem.n, 0)), []
    return np.column_stack(cols), names


def naive_ols(problem: HDProblem) -> np.ndarray:
    """Coefficients of y on the treatments (and a constant) alone."""
    blocks = [problem.treatments] + ([np.ones((problem.n, 1))] if problem.intercept else [])
    X = np.hstack(blocks)
    coef, *_ = np.linalg.lstsq(X, problem.y, rcond=None)
    return coef[: problem.treatments.shape[1]]


def partial_dof(problem: HDProblem) -> int:
    """Degrees of freedom used by partialling out (constant included)."""
    return problem.partial.shape[1] + int(problem.intercept)


def run_pds(
    problem: HDProblem,
    tuner: TunerConfig,
    se_mode: SEMode = SEMode.IID,
    threads: int = 1,
) -> PDSResult:
    """Post-double-selection: select, take the union, estimate by OLS."""
    if problem.instruments.shape[1] or problem.instruments_unpenalized.shape[1]:
        raise InferenceError("Instruments given to a post-double-selection run; use IV-LASSO")
    y_p = problem.partialled(problem.y)
    D_p = problem.partialled(problem.treatments)
    X_p = problem.partialled(problem.controls)
    U_p = problem.partialled(problem.controls_unpenalized)

    selection = pds_select(
        y_p,
        D_p,
        X_p,
        tuner,
        problem.treatment_names,
        problem.control_names,
        U_p,
        problem.controls_unpenalized_names,
        threads=threads,
        dependent_name=problem.dependent_name,
    )
    selected = union_of_selected(
        problem.control_names, selection.selected_step1, *selection.selected_step2.values()
    )
    W, w_names = final_controls(problem, selected)
    result = pds_estimate(
        problem.y,
        problem.treatments,
        W,
        se_mode,
        problem.clusters,
        problem.treatment_names,
        w_names,
        intercept=problem.intercept,
        absorbed_dof=problem.absorbed_dof,
        selection=selection,
    )
    result.naive_alpha = naive_ols(problem)
    return result


def chs_estimate(
    y: np.ndarray,
    D: np.ndarray,
    X_hd: np.ndarray,
    variant: CHSVariant,
    tuner: TunerConfig,
    se_mode: SEMode = SEMode.IID,
    clusters: Optional[np.ndarray] = None,
    treatment_names: Sequence[str] = (),
    control_names: Sequence[str] = (),
    unpenalized: Optional[np.ndarray] = None,
    unpenalized_names: Sequence[str] = (),
    absorbed_dof: int = 0,
    threads: int = 1,
    dependent_name: str = "y",
) -> CHSResult:
    """Partialling-out estimator on LASSO- or post-LASSO-orthogonalized variables.

    y is residualized on its LASSO fit (LASSO variant) or on the OLS refit of
    its selected controls (post-LASSO variant). Treatments are residualized
    on the OLS refit in both variants. alpha is the OLS coefficient of the y
    residual on the treatment residuals, with variance from that
    residual-on-residual regression. Inputs must already be free of
    partialled-out columns (and are centered here).

    Raises:
        InferenceError: If a treatment is fully explained by the controls
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    D = _as_matrix(D, n)
    X_hd = _as_matrix(X_hd, n)
    treatment_names = list(treatment_names) or [f"d{k + 1}" for k in range(D.shape[1])]
    control_names = list(control_names) or [f"x{k + 1}" for k in range(X_hd.shape[1])]
    selection = pds_select(
        y,
        D,
        X_hd,
        tuner,
        treatment_names,
        control_names,
        unpenalized,
        unpenalized_names,
        threads=threads,
        dependent_name=dependent_name,
    )
    design = standardized_design(X_hd, control_names, unpenalized, unpenalized_names)

    def orthogonalize(values: np.ndarray, sel: EquationSelection, use_lasso: bool) -> np.ndarray:
        centered = values - values.mean()
        if sel.tuning is None:
            return centered - sel.fitted if sel.fitted is not None else centered
        if use_lasso:
            return centered - sel.fitted
        refit = post_lasso_ols(
            design.X, centered, sel.tuning.fit.active_set, design.unpenalized
        )
        return centered - refit.predict(design.X)

    # treatment residuals stay orthogonal to their own selected columns in both variants
    y_tilde = orthogonalize(y, selection.step1, variant is CHSVariant.LASSO)
    D_tilde = np.empty((n, D.shape[1]))
    for k, name in enumerate(treatment_names):
        D_tilde[:, k] = orthogonalize(D[:, k], selection.step2[name], False)
    for k, name in enumerate(treatment_names):
        if np.linalg.norm(D_tilde[:, k]) < 1e-10 * np.linalg.norm(D[:, k]):
            raise InferenceError(f"Treatment '{name}' is fully explained by the controls")

    if n <= D.shape[1] + absorbed_dof:
        raise InferenceError("Insufficient degrees of freedom for the partialled regression")
    try:
        alpha, vcov, _ = fit_ols(D_tilde, y_tilde, se_mode, clusters, absorbed_dof)
    except RegressionError as e:
        raise InferenceError(str(e)) from e

    union = union_of_selected(
        control_names, selection.selected_step1, *selection.selected_step2.values()
    )
    return CHSResult(
        treatment_names=treatment_names,
        alpha=alpha,
        vcov=vcov,
        se_mode=se_mode,
        selected_step1=selection.selected_step1,
        selected_step2=selection.selected_step2,
        union_controls=list(dict.fromkeys(treatment_names + union + list(unpenalized_names))),
        n_used=n,
        dof=n - D.shape[1] - absorbed_dof,
        steps=_steps_of(selection),
        variant=variant,
    )


def run_chs(
    problem: HDProblem,
    variant: CHSVariant,
    tuner: TunerConfig,
    se_mode: SEMode = SEMode.IID,
    threads: int = 1,
) -> CHSResult:
    """Partialling-out estimator on a problem, after removing the partial columns."""
    if problem.instruments.shape[1] or problem.instruments_unpenalized.shape[1]:
        raise InferenceError("Instruments given to a partialling-out run; use IV-LASSO")
    # the amelioration set is always in: unpenalized in both selection LASSOs
    unpenalized = np.hstack([problem.controls_unpenalized, problem.amelioration])
    result = chs_estimate(
        problem.partialled(problem.y),
        problem.partialled(problem.treatments),
        problem.partialled(problem.controls),
        variant,
        tuner,
        se_mode,
        problem.clusters,
        problem.treatment_names,
        problem.control_names,
        problem.partialled(unpenalized),
        problem.controls_unpenalized_names + problem.amelioration_names,
        absorbed_dof=problem.absorbed_dof + partial_dof(problem),
        threads=threads,
        dependent_name=problem.dependent_name,
    )
    result.union_controls = list(dict.fromkeys(result.union_controls + problem.partial_names))
    result.naive_alpha = naive_ols(problem)
    return result
