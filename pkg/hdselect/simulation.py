"""Synthetic data-generating processes for Monte Carlo checks of the estimators."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import toeplitz

from hdselect.dataset import Dataset


@dataclass
class SimulatedData:
    """One draw from a DGP with its known parameters."""

    y: np.ndarray
    d: np.ndarray
    X: np.ndarray
    alpha: float
    Z: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None
    meta: Dict[str, float] = field(default_factory=dict)

    def control_names(self) -> List[str]:
        """Names x1..xp of the control columns."""
        return [f"x{j + 1}" for j in range(self.X.shape[1])]

    def instrument_names(self) -> List[str]:
        """Names z1..zq of the instrument columns."""
        return [] if self.Z is None else [f"z{j + 1}" for j in range(self.Z.shape[1])]

    def to_dataset(self) -> Dataset:
        """Columns y, d, x1..xp and z1..zq as a Dataset."""
        columns = {"y": self.y, "d": self.d}
        columns.update(zip(self.control_names(), self.X.T))
        if self.Z is not None:
            columns.update(zip(self.instrument_names(), self.Z.T))
        return Dataset(columns)


def sparse_coefficients(p: int, s: int = 5, value: float = 0.5) -> np.ndarray:
    """Vector with ``value`` in the first s entries and zeros elsewhere."""
    coef = np.zeros(p)
    coef[: min(s, p)] = value
    return coef


def toeplitz_design(n: int, p: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian rows with covariance rho^|j-k|."""
    cov = toeplitz(rho ** np.arange(p))
    return rng.multivariate_normal(np.zeros(p), cov, size=n, method="cholesky")


def pds_dgp(
    n: int = 100,
    p: int = 200,
    alpha: float = 0.5,
    rho: float = 0.5,
    beta: Optional[Sequence[float]] = None,
    gamma: Optional[Sequence[float]] = None,
    seed: Optional[int] = None,
) -> SimulatedData:
    """Confounded treatment design.

    y = alpha d + X beta + e and d = X gamma + u with X ~ N(0, Toeplitz(rho)).
    By default beta and gamma are 0.5 on the first five controls.
    """
    rng = np.random.default_rng(seed)
    beta_arr = sparse_coefficients(p) if beta is None else np.asarray(beta, dtype=float)
    gamma_arr = sparse_coefficients(p) if gamma is None else np.asarray(gamma, dtype=float)
    X = toeplitz_design(n, p, rho, rng)
    d = X @ gamma_arr + rng.standard_normal(n)
    y = alpha * d + X @ beta_arr + rng.standard_normal(n)
    return SimulatedData(y, d, X, alpha, beta=beta_arr, gamma=gamma_arr, meta={"rho": rho})


def iv_dgp(
    n: int = 200,
    n_instruments: int = 50,
    n_relevant: int = 3,
    strength: float = 0.5,
    alpha: float = 1.0,
    endogeneity: float = 0.6,
    p: int = 10,
    seed: Optional[int] = None,
) -> SimulatedData:
    """Endogenous treatment with many candidate instruments, few of them relevant.

    The structural and first-stage errors have correlation ``endogeneity``;
    the first ``n_relevant`` instruments enter d with coefficient ``strength``.
    Controls are independent noise columns.
    """
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, n_instruments))
    X = rng.standard_normal((n, p))
    errors = rng.multivariate_normal(
        np.zeros(2), [[1.0, endogeneity], [endogeneity, 1.0]], size=n
    )
    eps, u = errors[:, 0], errors[:, 1]
    pi = sparse_coefficients(n_instruments, n_relevant, strength)
    d = Z @ pi + u
    y = alpha * d + eps
    return SimulatedData(
        y, d, X, alpha, Z=Z, gamma=pi, meta={"endogeneity": endogeneity, "strength": strength}
    )


def heteroskedastic_dgp(
    n: int = 100,
    p: int = 50,
    s: int = 5,
    value: float = 1.0,
    seed: Optional[int] = None,
    driver: int = 0,
    power: float = 1.0,
) -> SimulatedData:
    """Sparse regression whose error sd is proportional to |x_driver| ** power.

    The default drives the noise by the first column. ``d`` is the first
    control, kept so the draw fits the common container.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = sparse_coefficients(p, s, value)
    y = X @ beta + np.abs(X[:, driver]) ** power * rng.standard_normal(n)
    return SimulatedData(
        y, X[:, 0].copy(), X, 0.0, beta=beta, meta={"driver": driver, "power": power}
    )


def summarize_estimates(
    estimates: np.ndarray,
    ci_low: np.ndarray,
    ci_high: np.ndarray,
    truth: float,
) -> Dict[str, float]:
    """Median bias, RMSE, empirical coverage and mean interval length."""
    estimates = np.asarray(estimates, dtype=float)
    ci_low = np.asarray(ci_low, dtype=float)
    ci_high = np.asarray(ci_high, dtype=float)
    return {
        "median_bias": float(np.median(estimates - truth)),
        "median_abs_bias": float(np.median(np.abs(estimates - truth))),
        "rmse": float(np.sqrt(np.mean((estimates - truth) ** 2))),
        "coverage": float(np.mean((ci_low <= truth) & (truth <= ci_high))),
        "ci_length": float(np.mean(ci_high - ci_low)),
    }
