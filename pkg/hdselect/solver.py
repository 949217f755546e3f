"""Penalized least-squares solvers: LASSO by coordinate descent and RIDGE.

Both minimize the mean-squared-error objective with predictor-specific
penalty loadings psi_j:

    Q(b) = (1/N) sum_i (y_i - x_i'b)^2 + (lam/N) sum_j psi_j |b_j|     (LASSO)
    Q(b) = (1/N) sum_i (y_i - x_i'b)^2 + (lam/N) sum_j psi_j b_j^2     (RIDGE)

A loading of zero leaves the coefficient unpenalized.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from numba import njit

from hdselect.errors import HDSError
from hdselect.logging_setup import get_logger

logger = get_logger()

DEFAULT_TOL = 1e-8
DEFAULT_KKT_TOL = 1e-6
DEFAULT_MAX_ITER = 100_000
DEFAULT_N_POINTS = 100
DEFAULT_MIN_RATIO = 1e-4

# Relative round-off guard at the soft-threshold kink, so a fit at exactly
# lambda_max returns the zero vector.
_THRESHOLD_SLACK = 1e-12


class SolverError(HDSError):
    """Raised when a penalized fit cannot be computed."""

    module = "solver"
    numeric = True


@dataclass(frozen=True)
class PenaltyConfig:
    """Overall penalty level and per-regressor loadings."""

    lam: float
    loadings: np.ndarray

    def __post_init__(self) -> None:
        loadings = np.asarray(self.loadings, dtype=float).ravel()
        if not np.isfinite(self.lam) or self.lam < 0:
            raise SolverError(f"Penalty level must be a finite value >= 0, got {self.lam}")
        if not np.all(np.isfinite(loadings)) or np.any(loadings < 0):
            raise SolverError("Penalty loadings must be finite and >= 0")
        object.__setattr__(self, "loadings", loadings)

    @classmethod
    def uniform(
        cls, lam: float, n_features: int, unpenalized: Sequence[int] = ()
    ) -> "PenaltyConfig":
        """Unit loadings for every column except the unpenalized ones."""
        loadings = np.ones(n_features)
        loadings[list(unpenalized)] = 0.0
        return cls(lam, loadings)

    @property
    def unpenalized(self) -> np.ndarray:
        """Indices with zero loading."""
        return np.flatnonzero(self.loadings == 0)


@dataclass
class LassoFit:
    """Result of one LASSO fit in the standardized scale."""

    coefficients: np.ndarray
    active_set: Tuple[int, ...]
    lam: float
    loadings: np.ndarray
    objective: float
    iterations: int
    converged: bool
    kkt_violation: float

    @property
    def sparsity(self) -> int:
        """Number of nonzero coefficients."""
        return len(self.active_set)


@dataclass
class PathResult:
    """LASSO fits along a decreasing grid of penalty levels."""

    lambdas: np.ndarray
    fits: List[LassoFit]
    lambda_max: float
    n_points: int
    min_ratio: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.lambdas) != len(self.fits):
            raise SolverError("Path grid and fits differ in length")
        if np.any(np.diff(self.lambdas) >= 0):
            raise SolverError("Path penalty levels must be strictly decreasing")

    def __len__(self) -> int:
        return len(self.fits)

    def coefficient_matrix(self) -> np.ndarray:
        """Coefficients as an (n_points x p) matrix."""
        return np.vstack([f.coefficients for f in self.fits])


@njit(cache=True, nogil=True)
def _cd_sweeps(X, resid, beta, thresholds, col_sq, tol, max_sweeps, reverse):
    """Cyclic coordinate descent on a column-major design.

    Updates ``beta`` and ``resid`` in place. Returns (sweeps used, whether the
    max coefficient change of the last sweep fell to ``tol``).
    """
    n, p = X.shape
    for sweep in range(max_sweeps):
        max_change = 0.0
        for k in range(p):
            j = p - 1 - k if reverse else k
            cs = col_sq[j]
            if cs == 0.0:
                continue
            bj = beta[j]
            dot = 0.0
            for i in range(n):
                dot += X[i, j] * resid[i]
            z = dot / n + bj * cs / n
            t = thresholds[j]
            if z > t * (1.0 + _THRESHOLD_SLACK):
                new = (z - t) * n / cs
            elif z < -t * (1.0 + _THRESHOLD_SLACK):
                new = (z + t) * n / cs
            else:
                new = 0.0
            delta = new - bj
            if delta != 0.0:
                for i in range(n):
                    resid[i] -= delta * X[i, j]
                beta[j] = new
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if max_change <= tol:
            return sweep + 1, True
    return max_sweeps, False


def _check_design(X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise SolverError(f"Design must be a 2-D matrix, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise SolverError(f"Design has {X.shape[0]} rows but response has {y.shape[0]}")
    if X.shape[0] < 1:
        raise SolverError("Design has no rows")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise SolverError("Design or response contains NaN or Inf")
    return X, y


def _check_penalty(penalty: PenaltyConfig, p: int) -> None:
    if penalty.loadings.shape[0] != p:
        raise SolverError(f"Got {penalty.loadings.shape[0]} loadings for {p} regressors")


def lasso_objective(
    X: np.ndarray, y: np.ndarray, coeffs: np.ndarray, penalty: PenaltyConfig
) -> float:
    """Evaluate the LASSO objective at ``coeffs``."""
    n = X.shape[0]
    resid = y - X @ coeffs
    return float(resid @ resid / n + penalty.lam / n * np.sum(penalty.loadings * np.abs(coeffs)))


def _kkt_violation(
    X: np.ndarray, y: np.ndarray, coeffs: np.ndarray, penalty: PenaltyConfig
) -> float:
    n = X.shape[0]
    if X.shape[1] == 0:
        return 0.0
    grad = 2.0 / n * (X.T @ (y - X @ coeffs))
    bound = penalty.lam / n * penalty.loadings
    active = coeffs != 0
    violation = np.where(
        active,
        np.abs(grad - bound * np.sign(coeffs)),
        np.maximum(0.0, np.abs(grad) - bound),
    )
    return float(violation.max())


def fit_lasso(
    X: np.ndarray,
    y: np.ndarray,
    penalty: PenaltyConfig,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    kkt_tol: float = DEFAULT_KKT_TOL,
    warm_start: Optional[np.ndarray] = None,
    order: str = "cyclic",
) -> LassoFit:
    """Minimize the LASSO objective by cyclic coordinate descent.

    Each sweep applies b_j <- S(z_j, lam psi_j / 2N) N / sum_i x_ij^2 with
    z_j = (1/N) sum_i x_ij r_i^(-j). Sweeps stop once the largest coefficient
    change is at most ``tol``; the fit then counts as converged only if a
    full KKT check over all coordinates passes ``kkt_tol``. Otherwise the
    tolerance is tightened and descent resumes until ``max_iter`` sweeps.

    Args:
        X: Standardized design (N x p); unpenalized columns at least centered
        y: Centered response
        penalty: Penalty level and loadings
        tol: Max coefficient change that ends a run of sweeps
        max_iter: Maximum number of full sweeps
        kkt_tol: Maximum KKT violation accepted as converged
        warm_start: Optional starting coefficients
        order: "cyclic" or "reversed" coordinate order

    Returns:
        LassoFit; ``converged`` is False when ``max_iter`` ran out
    """
    X, y = _check_design(X, y)
    n, p = X.shape
    _check_penalty(penalty, p)
    if tol <= 0:
        raise SolverError(f"Tolerance must be positive, got {tol}")
    if order not in ("cyclic", "reversed"):
        raise SolverError(f"Unknown coordinate order '{order}'")

    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    if beta.shape != (p,):
        raise SolverError(f"Warm start has shape {beta.shape}, expected ({p},)")

    Xf = np.asfortranarray(X)
    col_sq = np.einsum("ij,ij->j", X, X)
    thresholds = penalty.lam * penalty.loadings / (2.0 * n)
    reverse = order == "reversed"

    sweeps = 0
    converged = False
    sweep_tol = tol
    violation = np.inf
    while sweeps < max_iter:
        resid = y - Xf @ beta
        used, settled = _cd_sweeps(
            Xf, resid, beta, thresholds, col_sq, sweep_tol, max_iter - sweeps, reverse
        )
        sweeps += used
        violation = _kkt_violation(X, y, beta, penalty)
        if not settled:
            break
        if violation <= kkt_tol:
            converged = True
            break
        if sweep_tol < 1e-15:
            break
        sweep_tol /= 10.0
        logger.debug(
            f"KKT sweep found violation {violation:.3g}; tightening tolerance to {sweep_tol:g}"
        )

    if not converged:
        logger.warning(
            f"LASSO at lambda={penalty.lam:.6g} stopped after {sweeps} sweeps "
            f"with KKT violation {violation:.3g}"
        )

    active = tuple(int(j) for j in np.flatnonzero(beta))
    return LassoFit(
        coefficients=beta,
        active_set=active,
        lam=float(penalty.lam),
        loadings=penalty.loadings.copy(),
        objective=lasso_objective(X, y, beta, penalty),
        iterations=sweeps,
        converged=converged,
        kkt_violation=violation,
    )


def kkt_check(fit: LassoFit, X: np.ndarray, y: np.ndarray, penalty: PenaltyConfig) -> float:
    """Largest violation of the LASSO subgradient conditions.

    With g_j = (2/N) sum_i x_ij r_i, returns the max over j of
    |g_j - (lam/N) psi_j sign(b_j)| for active j and
    max(0, |g_j| - (lam/N) psi_j) for inactive j.
    """
    X, y = _check_design(X, y)
    _check_penalty(penalty, X.shape[1])
    return _kkt_violation(X, y, np.asarray(fit.coefficients, dtype=float), penalty)


def fit_ridge(X: np.ndarray, y: np.ndarray, penalty: PenaltyConfig) -> np.ndarray:
    """Solve the RIDGE normal equations (X'X + lam diag(psi)) b = X'y."""
    X, y = _check_design(X, y)
    n, p = X.shape
    _check_penalty(penalty, p)
    diagonal = penalty.lam * penalty.loadings
    if p >= n and not np.all(diagonal > 0):
        raise SolverError(
            f"RIDGE system is singular with {p} regressors and {n} rows; use lambda > 0"
        )
    gram = X.T @ X + np.diag(diagonal)
    try:
        return scipy.linalg.solve(gram, X.T @ y, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise SolverError(f"RIDGE system is singular ({e}); use lambda > 0") from e


def ridge_effective_df(X: np.ndarray, penalty: PenaltyConfig) -> float:
    """Effective degrees of freedom tr(X (X'X + lam diag(psi))^-1 X')."""
    X = np.asarray(X, dtype=float)
    gram = X.T @ X + np.diag(penalty.lam * penalty.loadings)
    return float(np.trace(scipy.linalg.solve(gram, X.T @ X, assume_a="sym")))


def lambda_max(
    X: np.ndarray,
    y: np.ndarray,
    loadings: np.ndarray,
    unpenalized: Optional[Sequence[int]] = None,
) -> float:
    """Smallest penalty level at which the zero vector is optimal.

    Returns max over penalized j of (2 / psi_j) |sum_i x_ij y_i|. When
    unpenalized columns are given, y is first residualized on them.
    """
    X, y = _check_design(X, y)
    loadings = np.asarray(loadings, dtype=float)
    p = X.shape[1]
    if loadings.shape != (p,):
        raise SolverError(f"Got {loadings.shape[0]} loadings for {p} regressors")
    free = np.zeros(p, dtype=bool)
    if unpenalized is not None:
        free[list(unpenalized)] = True
    penalized = ~free
    if not penalized.any():
        raise SolverError("lambda_max needs at least one penalized column")
    bad = np.flatnonzero(penalized & (loadings <= 0))
    if bad.size:
        raise SolverError(f"Penalized columns {bad.tolist()} have zero penalty loading")

    target = y
    if free.any():
        coef, *_ = scipy.linalg.lstsq(X[:, free], y)
        target = y - X[:, free] @ coef
    scores = 2.0 * np.abs(X[:, penalized].T @ target) / loadings[penalized]
    return float(scores.max())


def lambda_grid(lam_max: float, n_points: int, min_ratio: float) -> np.ndarray:
    """Log-spaced grid from lam_max down to min_ratio * lam_max."""
    if n_points < 2:
        raise SolverError(f"Path needs at least 2 points, got {n_points}")
    if not 0 < min_ratio < 1:
        raise SolverError(f"min_ratio must lie in (0, 1), got {min_ratio}")
    if lam_max <= 0:
        raise SolverError("lambda_max is zero: response is orthogonal to every penalized column")
    return lam_max * np.logspace(0.0, np.log10(min_ratio), n_points)


def regularization_path(
    X: np.ndarray,
    y: np.ndarray,
    loadings: np.ndarray,
    n_points: int = DEFAULT_N_POINTS,
    min_ratio: float = DEFAULT_MIN_RATIO,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    kkt_tol: float = DEFAULT_KKT_TOL,
    lambdas: Optional[np.ndarray] = None,
) -> PathResult:
    """Fit LASSO along a decreasing grid with warm starts.

    Args:
        X: Standardized design
        y: Centered response
        loadings: Penalty loadings (zero for unpenalized columns)
        n_points: Grid size
        min_ratio: Smallest grid value as a fraction of lambda_max
        lambdas: Explicit decreasing grid overriding n_points/min_ratio

    Returns:
        PathResult with one fit per grid point
    """
    X, y = _check_design(X, y)
    loadings = np.asarray(loadings, dtype=float)
    unpenalized = np.flatnonzero(loadings == 0)
    lam_max = lambda_max(X, y, loadings, unpenalized)
    if lambdas is None:
        grid = lambda_grid(lam_max, n_points, min_ratio)
    else:
        grid = np.asarray(lambdas, dtype=float)
        n_points = grid.size

    fits: List[LassoFit] = []
    warm: Optional[np.ndarray] = None
    for lam in grid:
        penalty = PenaltyConfig(float(lam), loadings)
        try:
            fit = fit_lasso(
                X, y, penalty, tol=tol, max_iter=max_iter, kkt_tol=kkt_tol, warm_start=warm
            )
        except SolverError as e:
            raise SolverError(f"Path fit failed at lambda={lam:.6g}: {e}") from e
        fits.append(fit)
        warm = fit.coefficients
    logger.debug(f"Computed {len(fits)}-point path from lambda_max={lam_max:.6g}")
    if lambdas is not None:
        min_ratio = float(grid[-1] / grid[0])
    return PathResult(grid, fits, lam_max, n_points, min_ratio)


def sparsity_index(coeffs: np.ndarray) -> int:
    """Number of nonzero coefficients."""
    return int(np.count_nonzero(np.asarray(coeffs)))


def is_sparse_solution(s: int, p: int, n: int) -> bool:
    """Whether s is small relative to both p and N (s <= p/2 and s <= N/2)."""
    return s <= p / 2 and s <= n / 2
