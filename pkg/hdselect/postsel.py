"""Post-LASSO OLS refit on the selected support."""

from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from hdselect.errors import HDSError
from hdselect.logging_setup import get_logger
from hdselect.regression_utils import independent_columns, ols

logger = get_logger()


class SelectionError(HDSError):
    """Raised when the selected support cannot be refit."""

    module = "postsel"
    numeric = True


@dataclass
class PostFit:
    """OLS coefficients on a selected support, zero elsewhere."""

    coefficients: np.ndarray
    active_set: Tuple[int, ...]
    intercept: float
    rss: float
    dof: int
    dropped: List[int] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Fitted values for a design laid out like the one that was refit."""
        return self.intercept + np.asarray(X, dtype=float) @ self.coefficients


def post_lasso_ols(
    X: np.ndarray,
    y: np.ndarray,
    active_set: Iterable[int],
    unpenalized_always_in: Sequence[int] = (),
    intercept: bool = True,
) -> PostFit:
    """Refit OLS on the active set plus always-included columns.

    Collinear columns are dropped deterministically, keeping earlier ones.

    Args:
        X: Design (N x p)
        y: Response
        active_set: Indices selected by the LASSO
        unpenalized_always_in: Indices that are always refit
        intercept: Include a constant in the refit

    Returns:
        PostFit with coefficients padded by zeros off the support
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    support = sorted(set(int(j) for j in active_set) | set(int(j) for j in unpenalized_always_in))
    if any(j < 0 or j >= p for j in support):
        raise SelectionError(f"Support indices out of range for {p} columns")
    if len(support) >= n:
        raise SelectionError(
            f"Insufficient degrees of freedom after selection: "
            f"{len(support)} regressors for {n} rows"
        )

    if intercept:
        x_mean = X[:, support].mean(axis=0) if support else np.zeros(0)
        y_mean = float(y.mean())
    else:
        x_mean = np.zeros(len(support))
        y_mean = 0.0
    sub = X[:, support] - x_mean
    target = y - y_mean

    kept_local = independent_columns(sub)
    dropped = [support[i] for i in range(len(support)) if i not in set(kept_local)]
    kept = [support[i] for i in kept_local]
    if dropped:
        logger.warning(f"Post-LASSO refit dropped collinear columns {dropped}")
    design = sub[:, kept_local]
    if design.shape[1] and np.linalg.matrix_rank(design) < design.shape[1]:
        raise SelectionError("Refit design is rank deficient after collinearity drops")

    coef = ols(design, target)
    coefficients = np.zeros(p)
    coefficients[kept] = coef
    resid = target - design @ coef
    fitted_intercept = y_mean - float(x_mean[kept_local] @ coef) if support else y_mean
    return PostFit(
        coefficients=coefficients,
        active_set=tuple(j for j in kept if coefficients[j] != 0),
        intercept=fitted_intercept,
        rss=float(resid @ resid),
        dof=n - len(kept) - int(intercept),
        dropped=dropped,
    )


def post_lasso_fitted(
    X: np.ndarray,
    y: np.ndarray,
    active_set: Iterable[int],
    unpenalized_always_in: Sequence[int] = (),
    intercept: bool = True,
) -> Tuple[np.ndarray, PostFit]:
    """Fitted values of the post-LASSO refit (the mean of y when nothing is selected)."""
    refit = post_lasso_ols(X, y, active_set, unpenalized_always_in, intercept)
    return refit.predict(X), refit
