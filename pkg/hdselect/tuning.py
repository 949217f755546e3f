"""Data-driven choice of the LASSO penalty level and loadings."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import norm

from hdselect.dataset import standardize_matrix
from hdselect.errors import HDSError
from hdselect.logging_setup import get_logger
from hdselect.regression_utils import independent_columns, ols
from hdselect.solver import (
    DEFAULT_KKT_TOL,
    DEFAULT_MAX_ITER,
    DEFAULT_MIN_RATIO,
    DEFAULT_N_POINTS,
    DEFAULT_TOL,
    LassoFit,
    PathResult,
    PenaltyConfig,
    SolverError,
    fit_lasso,
    lambda_grid,
    lambda_max,
    regularization_path,
)

logger = get_logger()

RSS_FLOOR = 1e-12
LOADING_TOL = 1e-4
N_INITIAL_CORRELATED = 5


class TuningError(HDSError):
    """Raised when a penalty level cannot be selected."""

    module = "tuning"
    numeric = True


class TuningMethod(Enum):
    """How the penalty level was chosen."""

    AIC = "aic"
    BIC = "bic"
    EBIC = "ebic"
    CV = "cv"
    RIGOROUS = "rigorous"
    FIXED = "fixed"


class LoadingMode(Enum):
    """Residual structure assumed by the rigorous loadings."""

    IID = "iid"
    ROBUST = "robust"
    CLUSTER = "cluster"


@dataclass
class TuningResult:
    """Chosen penalty level, loadings and per-candidate diagnostics."""

    method: TuningMethod
    chosen_lambda: float
    loadings: np.ndarray
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    iterations: int = 0
    fit: Optional[LassoFit] = None


@dataclass(frozen=True, eq=False)
class TunerConfig:
    """Settings for choosing the penalty of one selection LASSO."""

    method: TuningMethod = TuningMethod.RIGOROUS
    loading_mode: LoadingMode = LoadingMode.ROBUST
    clusters: Optional[np.ndarray] = None
    c: float = 1.1
    gamma: Optional[float] = None
    max_rounds: int = 15
    post_residuals: bool = True
    cv_folds: int = 10
    seed: int = 0
    ebic_xi: float = 1.0
    n_points: int = DEFAULT_N_POINTS
    min_ratio: float = DEFAULT_MIN_RATIO
    fixed_lambda: Optional[float] = None
    tol: float = DEFAULT_TOL
    kkt_tol: float = DEFAULT_KKT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    threads: int = 1


def _information_penalty(criterion: TuningMethod, n: int, p: int, xi: float) -> float:
    if criterion is TuningMethod.AIC:
        return 2.0
    if criterion is TuningMethod.BIC:
        return float(np.log(n))
    if criterion is TuningMethod.EBIC:
        return float(np.log(n) + 2.0 * xi * np.log(p))
    raise TuningError(f"{criterion.value} is not an information criterion")


def information_criteria(
    X: np.ndarray, y: np.ndarray, coefficients: np.ndarray, xi: float = 1.0
) -> Dict[str, float]:
    """AIC, BIC and EBIC scores of one fit, with df = number of nonzero coefficients."""
    n, p = X.shape
    resid = y - X @ coefficients
    rss = max(float(resid @ resid), RSS_FLOOR)
    df = int(np.count_nonzero(coefficients))
    base = n * np.log(rss / n)
    return {
        criterion.value: float(base + _information_penalty(criterion, n, p, xi) * df)
        for criterion in (TuningMethod.AIC, TuningMethod.BIC, TuningMethod.EBIC)
    }


def select_by_ic(
    path: PathResult,
    X: np.ndarray,
    y: np.ndarray,
    criterion: TuningMethod,
    xi: float = 1.0,
) -> TuningResult:
    """Pick the path point minimizing N ln(RSS/N) + penalty * |active set|.

    The penalty is 2 (AIC), ln N (BIC) or ln N + 2 xi ln p (EBIC). Ties go to
    the larger penalty level, i.e. the sparser model.
    """
    if len(path) == 0:
        raise TuningError("Cannot select from an empty path")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    weight = _information_penalty(criterion, n, p, xi)

    scores: List[float] = []
    floored: List[float] = []
    for lam, fit in zip(path.lambdas, path.fits):
        resid = y - X @ fit.coefficients
        rss = float(resid @ resid)
        if rss < RSS_FLOOR:
            floored.append(float(lam))
            rss = RSS_FLOOR
        scores.append(n * np.log(rss / n) + weight * len(fit.active_set))

    best = 0
    for i, score in enumerate(scores):
        if score < scores[best]:
            best = i
    chosen = path.fits[best]
    logger.info(
        f"{criterion.value.upper()} chose lambda={path.lambdas[best]:.6g} "
        f"with {len(chosen.active_set)} active"
    )
    return TuningResult(
        method=criterion,
        chosen_lambda=float(path.lambdas[best]),
        loadings=chosen.loadings.copy(),
        diagnostics={
            "lambdas": [float(v) for v in path.lambdas],
            "scores": [float(s) for s in scores],
            "rss_floored_at": floored,
            "xi": xi,
        },
        fit=chosen,
    )


def _fold_errors(
    X: np.ndarray,
    y: np.ndarray,
    loadings: np.ndarray,
    grid: np.ndarray,
    test: np.ndarray,
    tol: float,
    kkt_tol: float,
    max_iter: int,
) -> np.ndarray:
    train = np.ones(X.shape[0], dtype=bool)
    train[test] = False
    X_train, means, scales = standardize_matrix(X[train])
    y_mean = y[train].mean()
    y_train = y[train] - y_mean
    X_test = (X[test] - means) / scales

    errors = np.empty(grid.size)
    warm: Optional[np.ndarray] = None
    for i, lam in enumerate(grid):
        fit = fit_lasso(
            X_train,
            y_train,
            PenaltyConfig(float(lam), loadings),
            tol=tol,
            max_iter=max_iter,
            kkt_tol=kkt_tol,
            warm_start=warm,
        )
        warm = fit.coefficients
        pred = y_mean + X_test @ fit.coefficients
        errors[i] = np.mean((y[test] - pred) ** 2)
    return errors


def kfold_cv(
    X: np.ndarray,
    y: np.ndarray,
    loadings: np.ndarray,
    grid: Optional[np.ndarray] = None,
    K: int = 10,
    seed: int = 0,
    threads: int = 1,
    n_points: int = DEFAULT_N_POINTS,
    min_ratio: float = DEFAULT_MIN_RATIO,
    tol: float = DEFAULT_TOL,
    kkt_tol: float = DEFAULT_KKT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> TuningResult:
    """K-fold cross-validation of the penalty level.

    Rows are shuffled with a seeded generator and split into K folds. Each
    training fold is standardized with its own statistics, which are then
    applied to the held-out fold. Fold curves are averaged in fold order, so
    the result does not depend on how folds are scheduled across threads.

    Args:
        X: Design (N x p), raw or standardized
        y: Response
        loadings: Penalty loadings (zero for unpenalized columns)
        grid: Decreasing penalty levels; default grid from the full data
        K: Number of folds, 2 <= K <= N
        seed: Seed of the fold shuffle
        threads: Worker count for fold evaluation

    Returns:
        TuningResult with the CV curve in ``diagnostics``
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    loadings = np.asarray(loadings, dtype=float)
    n = X.shape[0]
    if K < 2:
        raise TuningError(f"Cross-validation needs at least 2 folds, got {K}")
    if K > n:
        raise TuningError(f"Cannot split {n} rows into {K} folds")

    if grid is None:
        X_std, _, _ = standardize_matrix(X)
        lam_max = lambda_max(X_std, y - y.mean(), loadings, np.flatnonzero(loadings == 0))
        try:
            grid = lambda_grid(lam_max, n_points, min_ratio)
        except SolverError as e:
            raise TuningError(str(e)) from e
    grid = np.asarray(grid, dtype=float)

    rng = np.random.default_rng(seed)
    folds = np.array_split(rng.permutation(n), K)
    if any(f.size == 0 for f in folds):
        raise TuningError("Cross-validation produced an empty fold")

    def run_fold(test: np.ndarray) -> np.ndarray:
        return _fold_errors(X, y, loadings, grid, test, tol, kkt_tol, max_iter)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            fold_errors = list(ex.map(run_fold, folds))
    else:
        fold_errors = [run_fold(f) for f in folds]

    curve = np.zeros(grid.size)
    for errors in fold_errors:
        curve += errors
    curve /= K
    best = int(np.argmin(curve))
    logger.info(f"{K}-fold CV chose lambda={grid[best]:.6g} (MSPE {curve[best]:.6g})")
    return TuningResult(
        method=TuningMethod.CV,
        chosen_lambda=float(grid[best]),
        loadings=loadings.copy(),
        diagnostics={
            "lambdas": [float(v) for v in grid],
            "cv_mspe": [float(v) for v in curve],
            "folds": K,
            "seed": seed,
        },
    )


def rigorous_penalty_level(n: int, p: int, c: float = 1.1, gamma: Optional[float] = None) -> float:
    """Plug-in penalty level 2 c sqrt(N) Phi^-1(1 - gamma / 2p).

    Args:
        n: Number of observations
        p: Number of penalized regressors
        c: Slack constant
        gamma: Significance level, default 0.1 / ln(N)
    """
    if gamma is None:
        gamma = 0.1 / np.log(n)
    if not 0 < gamma / (2 * p) < 1:
        raise TuningError(f"Degenerate plug-in quantile for gamma={gamma}, p={p}")
    return float(2.0 * c * np.sqrt(n) * norm.ppf(1.0 - gamma / (2.0 * p)))


def _compute_loadings(
    X: np.ndarray, resid: np.ndarray, mode: LoadingMode, clusters: Optional[np.ndarray]
) -> np.ndarray:
    n = X.shape[0]
    if mode is LoadingMode.IID:
        sigma = np.sqrt(np.mean(resid**2))
        return sigma * np.sqrt(np.mean(X**2, axis=0))
    if mode is LoadingMode.ROBUST:
        return np.sqrt(np.mean(X**2 * (resid**2)[:, None], axis=0))
    _, codes = np.unique(np.asarray(clusters), return_inverse=True)
    scores = np.zeros((int(codes.max()) + 1, X.shape[1]))
    np.add.at(scores, codes, X * resid[:, None])
    return np.sqrt(np.sum(scores**2, axis=0) / n)


def _selection_residuals(
    X: np.ndarray, y: np.ndarray, fit: LassoFit, unpenalized: np.ndarray, post: bool
) -> np.ndarray:
    if not post:
        return y - X @ fit.coefficients
    support = sorted(set(fit.active_set) | set(int(j) for j in unpenalized))
    if not support:
        return y.copy()
    keep = [support[i] for i in independent_columns(X[:, support])]
    sub = X[:, keep]
    return y - sub @ ols(sub, y)


def rigorous_lambda(
    X: np.ndarray,
    y: np.ndarray,
    mode: LoadingMode = LoadingMode.ROBUST,
    cluster_id: Optional[np.ndarray] = None,
    c: float = 1.1,
    gamma: Optional[float] = None,
    max_rounds: int = 15,
    unpenalized: Sequence[int] = (),
    post_residuals: bool = True,
    tol: float = DEFAULT_TOL,
    kkt_tol: float = DEFAULT_KKT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> TuningResult:
    """Theory-driven penalty level with iterated loadings.

    Round 0 takes residuals from OLS of y on the five penalized columns most
    correlated with y (plus unpenalized columns). Each later round refits the
    LASSO at the current loadings and recomputes them from its residuals
    (post-LASSO residuals by default). Iteration stops when the largest
    relative loading change is at most 1e-4 or after ``max_rounds``.

    Args:
        X: Standardized design
        y: Centered response
        mode: IID, ROBUST or CLUSTER loadings
        cluster_id: Cluster labels, required in CLUSTER mode
        c: Slack constant of the penalty level
        gamma: Significance level, default 0.1 / ln(N)
        max_rounds: Maximum number of loading updates
        unpenalized: Columns carried with zero loading

    Returns:
        TuningResult whose ``fit`` is the LASSO at the final loadings
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    free = np.zeros(p, dtype=bool)
    free[list(unpenalized)] = True
    penalized = ~free
    p_pen = int(penalized.sum())
    if p_pen < 2:
        raise TuningError(f"Rigorous penalty needs at least 2 penalized regressors, got {p_pen}")
    if mode is LoadingMode.CLUSTER and cluster_id is None:
        raise TuningError("Cluster loadings requested without cluster identifiers")

    lam = rigorous_penalty_level(n, p_pen, c, gamma)

    pen_idx = np.flatnonzero(penalized)
    norms = np.linalg.norm(X[:, pen_idx], axis=0) * max(np.linalg.norm(y), 1e-300)
    corr = np.abs(X[:, pen_idx].T @ y) / np.where(norms > 0, norms, 1.0)
    top = pen_idx[np.argsort(-corr, kind="stable")[:N_INITIAL_CORRELATED]]
    start_cols = sorted(set(top.tolist()) | set(np.flatnonzero(free).tolist()))
    keep = [start_cols[i] for i in independent_columns(X[:, start_cols])]
    resid = y - X[:, keep] @ ols(X[:, keep], y)

    def loadings_from(resid: np.ndarray) -> np.ndarray:
        if np.linalg.norm(resid) <= 1e-12 * max(1.0, np.linalg.norm(y)):
            raise TuningError("All residuals are zero; the loadings are undefined")
        psi = _compute_loadings(X, resid, mode, cluster_id)
        psi[free] = 0.0
        if np.any(psi[penalized] <= 0):
            raise TuningError("A penalized column received a zero loading")
        return psi

    psi = loadings_from(resid)
    history: List[float] = []
    rounds = 0
    fit: Optional[LassoFit] = None
    for rounds in range(1, max_rounds + 1):
        fit = fit_lasso(
            X,
            y,
            PenaltyConfig(lam, psi),
            tol=tol,
            max_iter=max_iter,
            kkt_tol=kkt_tol,
            warm_start=None if fit is None else fit.coefficients,
        )
        resid = _selection_residuals(X, y, fit, np.flatnonzero(free), post_residuals)
        new_psi = loadings_from(resid)
        change = float(np.max(np.abs(new_psi[penalized] - psi[penalized]) / psi[penalized]))
        history.append(change)
        psi = new_psi
        logger.debug(f"Loading round {rounds}: {len(fit.active_set)} active, change {change:.3g}")
        if change <= LOADING_TOL:
            break

    final = fit_lasso(
        X,
        y,
        PenaltyConfig(lam, psi),
        tol=tol,
        max_iter=max_iter,
        kkt_tol=kkt_tol,
        warm_start=None if fit is None else fit.coefficients,
    )
    logger.info(
        f"Rigorous lambda={lam:.6g} ({mode.value} loadings, {rounds} rounds), "
        f"{len(final.active_set)} active"
    )
    return TuningResult(
        method=TuningMethod.RIGOROUS,
        chosen_lambda=lam,
        loadings=psi,
        diagnostics={
            "loading_mode": mode.value,
            "c": c,
            "gamma": float(0.1 / np.log(n)) if gamma is None else gamma,
            "loading_changes": history,
        },
        iterations=rounds,
        fit=final,
    )


def tune_lasso(
    X: np.ndarray,
    y: np.ndarray,
    config: TunerConfig,
    unpenalized: Sequence[int] = (),
) -> TuningResult:
    """Choose the penalty for one LASSO and return the fit at that choice.

    Args:
        X: Standardized design
        y: Centered response
        config: Tuning settings
        unpenalized: Columns carried with zero loading

    Returns:
        TuningResult with ``fit`` set
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    p = X.shape[1]
    if p - len(set(unpenalized)) < 1:
        raise TuningError("No penalized regressors to tune")
    unit = PenaltyConfig.uniform(0.0, p, unpenalized).loadings
    solver_args = dict(tol=config.tol, kkt_tol=config.kkt_tol, max_iter=config.max_iter)

    try:
        if config.fixed_lambda is not None:
            fit = fit_lasso(X, y, PenaltyConfig(config.fixed_lambda, unit), **solver_args)
            return TuningResult(TuningMethod.FIXED, config.fixed_lambda, unit, fit=fit)

        if config.method is TuningMethod.RIGOROUS:
            mode = LoadingMode.CLUSTER if config.clusters is not None else config.loading_mode
            return rigorous_lambda(
                X,
                y,
                mode=mode,
                cluster_id=config.clusters,
                c=config.c,
                gamma=config.gamma,
                max_rounds=config.max_rounds,
                unpenalized=unpenalized,
                post_residuals=config.post_residuals,
                **solver_args,
            )

        if config.method is TuningMethod.CV:
            result = kfold_cv(
                X,
                y,
                unit,
                K=config.cv_folds,
                seed=config.seed,
                threads=config.threads,
                n_points=config.n_points,
                min_ratio=config.min_ratio,
                **solver_args,
            )
            result.fit = fit_lasso(X, y, PenaltyConfig(result.chosen_lambda, unit), **solver_args)
            return result

        path = regularization_path(
            X, y, unit, n_points=config.n_points, min_ratio=config.min_ratio, **solver_args
        )
        return select_by_ic(path, X, y, config.method, xi=config.ebic_xi)
    except SolverError as e:
        raise TuningError(f"{config.method.value} tuning failed: {e}") from e
