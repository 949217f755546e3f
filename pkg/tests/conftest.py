"""Pytest configuration and fixtures."""

import os

import numpy as np
import pytest

from hdselect.simulation import pds_dgp
from hdselect.tuning import TunerConfig

MC_REPS_ENV_VAR = "HDSELECT_MC_REPS"


def mc_reps(default: int) -> int:
    """Monte Carlo replication count, overridable through HDSELECT_MC_REPS."""
    value = os.getenv(MC_REPS_ENV_VAR)
    return int(value) if value else default


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return repr(float(value))


def write_csv(path, columns):
    """Write a dict of equal-length columns as a CSV file."""
    names = list(columns)
    n = len(next(iter(columns.values())))
    lines = [",".join(names)]
    lines.extend(",".join(_cell(columns[name][i]) for name in names) for i in range(n))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def csv_writer():
    """The write_csv helper."""
    return write_csv


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(20240601)


@pytest.fixture
def standardized_problem(rng):
    """Standardized design (N=100, p=10) with a centered sparse response."""
    n, p = 100, 10
    X = rng.standard_normal((n, p))
    X = (X - X.mean(axis=0)) / X.std(axis=0)
    beta = np.zeros(p)
    beta[:3] = [1.5, -1.0, 0.5]
    y = X @ beta + rng.standard_normal(n)
    return X, y - y.mean(), beta


@pytest.fixture
def exact_tuner():
    """Penalization disabled (lambda = 0) with tight solver tolerances."""
    return TunerConfig(fixed_lambda=0.0, tol=1e-13, kkt_tol=1e-10)


@pytest.fixture
def confounded_csv(tmp_path):
    """CSV with y, d and 20 controls drawn from the confounded treatment design."""
    draw = pds_dgp(n=120, p=20, seed=7)
    columns = {"y": draw.y, "d": draw.d}
    columns.update(zip(draw.control_names(), draw.X.T))
    return write_csv(tmp_path / "confounded.csv", columns)
