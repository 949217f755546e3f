"""Least-squares helpers shared by the selection and inference modules."""

from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
import statsmodels.api as sm
from linearmodels.iv import IV2SLS

from hdselect.errors import HDSError
from hdselect.logging_setup import get_logger

logger = get_logger()

COLLINEAR_TOL = 1e-10


class RegressionError(HDSError):
    """Raised when a least-squares problem is degenerate."""

    module = "regression"
    numeric = True


class SEMode(Enum):
    """Variance estimator for OLS/IV coefficients."""

    IID = "iid"
    ROBUST = "robust"
    CLUSTER = "cluster"


def ols(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares coefficients of y on the columns of X (no intercept added)."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] == 0:
        return np.zeros(0)
    coef, *_ = scipy.linalg.lstsq(X, np.asarray(y, dtype=float))
    return coef


def residualize(M: np.ndarray, W: Optional[np.ndarray], intercept: bool = True) -> np.ndarray:
    """Residuals of each column of M after projecting on W (and a constant).

    Args:
        M: Vector or matrix to residualize
        W: Columns to partial out, or None
        intercept: Also partial out a constant

    Returns:
        Residuals with the shape of M
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    blocks = []
    if intercept:
        blocks.append(np.ones((n, 1)))
    if W is not None and np.asarray(W).size:
        blocks.append(np.asarray(W, dtype=float).reshape(n, -1))
    if not blocks or M.size == 0:
        return M.copy()
    basis = np.hstack(blocks)
    coef, *_ = scipy.linalg.lstsq(basis, M)
    return M - basis @ coef


def independent_columns(
    X: np.ndarray, names: Optional[Sequence[str]] = None, tol: float = COLLINEAR_TOL
) -> List[int]:
    """Indices of a maximal linearly independent subset, keeping earlier columns.

    A column is dropped when its residual after projection on the columns
    already kept has norm below ``tol`` times its own norm.
    """
    X = np.asarray(X, dtype=float)
    kept: List[int] = []
    q_basis = np.empty((X.shape[0], 0))
    for j in range(X.shape[1]):
        col = X[:, j]
        norm = np.linalg.norm(col)
        if norm == 0.0:
            resid_norm = 0.0
        else:
            resid = col - q_basis @ (q_basis.T @ col)
            # second pass keeps the Gram-Schmidt step stable
            resid = resid - q_basis @ (q_basis.T @ resid)
            resid_norm = np.linalg.norm(resid)
        if norm == 0.0 or resid_norm <= tol * norm:
            label = names[j] if names is not None else str(j)
            logger.warning(f"Dropping collinear column '{label}'")
            continue
        kept.append(j)
        q_basis = np.column_stack([q_basis, resid / resid_norm])
    return kept


_STATSMODELS_COV = {SEMode.IID: "nonrobust", SEMode.ROBUST: "HC1", SEMode.CLUSTER: "cluster"}
_LINEARMODELS_COV = {SEMode.IID: "unadjusted", SEMode.ROBUST: "robust", SEMode.CLUSTER: "clustered"}


def _dof(n: int, k: int, absorbed: int) -> int:
    dof = n - k - absorbed
    if dof <= 0:
        raise RegressionError(
            f"No residual degrees of freedom: N={n}, regressors={k}, absorbed={absorbed}"
        )
    return dof


def cluster_codes(clusters: Optional[np.ndarray]) -> np.ndarray:
    """Integer group codes for cluster labels of any type.

    Raises:
        RegressionError: If labels are missing or name fewer than two clusters
    """
    if clusters is None:
        raise RegressionError("Cluster variance requested without cluster labels")
    _, codes = np.unique(np.asarray(clusters), return_inverse=True)
    if codes.size == 0 or int(codes.max()) < 1:
        raise RegressionError("Cluster-robust variance needs at least two clusters")
    return codes.ravel()


def absorbed_scale(n: int, k: int, absorbed_dof: int) -> float:
    """Factor turning an (N - k) small-sample correction into (N - k - absorbed)."""
    return (n - k) / _dof(n, k, absorbed_dof)


def fit_ols(
    X: np.ndarray,
    y: np.ndarray,
    mode: SEMode = SEMode.IID,
    clusters: Optional[np.ndarray] = None,
    absorbed_dof: int = 0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """OLS coefficients, variance matrix and residuals on a full-rank design.

    iid: s^2 (X'X)^-1 with s^2 = RSS / (N - k - absorbed).
    robust: HC1 sandwich scaled by N / (N - k - absorbed).
    cluster: CRVE scaled by G/(G-1) * (N-1)/(N - k - absorbed).

    statsmodels applies the N - k corrections; only the absorbed parameters
    (fixed effects, partialled columns) are accounted for here.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, k = X.shape
    scale = absorbed_scale(n, k, absorbed_dof)
    cov_kwds = {"groups": cluster_codes(clusters)} if mode is SEMode.CLUSTER else None
    try:
        results = sm.OLS(y, X).fit(cov_type=_STATSMODELS_COV[mode], cov_kwds=cov_kwds)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise RegressionError(f"OLS failed: {e}") from e
    vcov = np.asarray(results.cov_params(), dtype=float) * scale
    params = np.asarray(results.params, dtype=float)
    return params, (vcov + vcov.T) / 2.0, y - X @ params


def fit_iv(
    X: np.ndarray,
    y: np.ndarray,
    names: Sequence[str],
    endogenous: Sequence[str],
    instruments: np.ndarray,
    mode: SEMode = SEMode.IID,
    clusters: Optional[np.ndarray] = None,
    absorbed_dof: int = 0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """2SLS coefficients, variance matrix and structural residuals.

    Columns of X named in ``endogenous`` are instrumented by the excluded
    ``instruments``; the remaining columns are exogenous. Coefficients and
    variance come back in the column order of X. The variance uses the
    N - k small-sample corrections of fit_ols, with the same absorbed
    degrees of freedom adjustment.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, k = X.shape
    names = list(names)
    scale = absorbed_scale(n, k, absorbed_dof)
    frame = pd.DataFrame(X, columns=names)
    endog_names = [name for name in names if name in set(endogenous)]
    exog_names = [name for name in names if name not in set(endogenous)]
    Z = np.asarray(instruments, dtype=float).reshape(n, -1)
    Z_frame = pd.DataFrame(Z, columns=[f"instrument{j + 1}" for j in range(Z.shape[1])])
    cov_config = {"clusters": cluster_codes(clusters)} if mode is SEMode.CLUSTER else {}
    try:
        model = IV2SLS(
            pd.Series(y, name="dependent"),
            frame[exog_names] if exog_names else None,
            frame[endog_names] if endog_names else None,
            Z_frame if endog_names else None,
        )
        results = model.fit(cov_type=_LINEARMODELS_COV[mode], debiased=True, **cov_config)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise RegressionError(f"Two-stage least squares failed: {e}") from e
    params = results.params.loc[names].to_numpy(dtype=float)
    vcov = results.cov.loc[names, names].to_numpy(dtype=float) * scale
    return params, (vcov + vcov.T) / 2.0, y - X @ params
