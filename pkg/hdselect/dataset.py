"""Tabular data ingestion, variable roles, dummy encoding and standardization."""

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from hdselect.errors import HDSError
from hdselect.logging_setup import get_logger

logger = get_logger()

DEFAULT_NA_MARKERS = ("", "NA", ".")


class DatasetError(HDSError):
    """Raised for malformed input data or invalid role assignments."""

    module = "dataset"


def _freeze(values: np.ndarray) -> np.ndarray:
    values = np.array(values, copy=True)
    values.flags.writeable = False
    return values


def _is_categorical(values: np.ndarray) -> bool:
    return values.dtype == object


def _missing_mask(values: np.ndarray) -> np.ndarray:
    if _is_categorical(values):
        return np.array([v is None for v in values], dtype=bool)
    return np.isnan(values)


@dataclass(frozen=True)
class Dataset:
    """Named columns of equal length.

    Numeric columns are float arrays with NaN for missing cells; categorical
    columns are object arrays of strings with None for missing cells. Arrays
    are read-only so a Dataset can be shared across threads.
    """

    columns: Mapping[str, np.ndarray]
    panel_id: Optional[str] = None
    time_id: Optional[str] = None
    cluster_id: Optional[str] = None

    def __post_init__(self) -> None:
        frozen: Dict[str, np.ndarray] = {}
        lengths = set()
        for name, values in self.columns.items():
            arr = np.asarray(values)
            if arr.ndim != 1:
                raise DatasetError(f"Column '{name}' must be one-dimensional")
            if arr.dtype.kind in "US":
                arr = arr.astype(object)
            elif arr.dtype != object:
                arr = arr.astype(float)
            frozen[name] = _freeze(arr)
            lengths.add(arr.shape[0])
        if not frozen:
            raise DatasetError("Dataset has no columns")
        if len(lengths) != 1:
            raise DatasetError(f"Columns have unequal lengths: {sorted(lengths)}")
        if lengths.pop() < 1:
            raise DatasetError("Dataset has no rows")
        object.__setattr__(self, "columns", frozen)
        for role in ("panel_id", "time_id", "cluster_id"):
            name = getattr(self, role)
            if name is not None and name not in frozen:
                raise DatasetError(f"{role} column '{name}' not found")

    @property
    def names(self) -> List[str]:
        """Column names in file order."""
        return list(self.columns)

    @property
    def n_rows(self) -> int:
        """Number of rows."""
        return next(iter(self.columns.values())).shape[0]

    def __contains__(self, name: object) -> bool:
        return name in self.columns

    def column(self, name: str) -> np.ndarray:
        """Get a column by name."""
        try:
            return self.columns[name]
        except KeyError:
            raise DatasetError(f"Column '{name}' not found") from None

    def numeric(self, name: str) -> np.ndarray:
        """Get a numeric column as float array, refusing categorical columns."""
        values = self.column(name)
        if _is_categorical(values):
            raise DatasetError(f"Column '{name}' is categorical where a numeric column is needed")
        return values

    def is_categorical(self, name: str) -> bool:
        """Check whether a column holds string levels."""
        return _is_categorical(self.column(name))

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Stack numeric columns into an N x k float matrix."""
        if not names:
            return np.empty((self.n_rows, 0))
        return np.column_stack([self.numeric(n) for n in names])

    def with_columns(self, updates: Mapping[str, np.ndarray]) -> "Dataset":
        """Return a copy with columns replaced or appended."""
        merged = dict(self.columns)
        merged.update(updates)
        return dataclasses.replace(self, columns=merged)

    def without_columns(self, names: Iterable[str]) -> "Dataset":
        """Return a copy without the given columns."""
        drop = set(names)
        kept = {k: v for k, v in self.columns.items() if k not in drop}
        return dataclasses.replace(self, columns=kept)

    def take_rows(self, rows: np.ndarray) -> "Dataset":
        """Return a copy restricted to the given row indices or boolean mask."""
        return dataclasses.replace(self, columns={k: v[rows] for k, v in self.columns.items()})

    def with_roles(
        self,
        panel_id: Optional[str] = None,
        time_id: Optional[str] = None,
        cluster_id: Optional[str] = None,
    ) -> "Dataset":
        """Return a copy with panel, time and cluster identifiers designated."""
        return dataclasses.replace(
            self,
            panel_id=panel_id or self.panel_id,
            time_id=time_id or self.time_id,
            cluster_id=cluster_id or self.cluster_id,
        )

    def to_frame(self) -> pd.DataFrame:
        """Convert to a pandas DataFrame."""
        return pd.DataFrame({k: np.asarray(v) for k, v in self.columns.items()})


def _parse_column(name: str, cells: List[Optional[str]], col_index: int) -> np.ndarray:
    """Convert one column of raw cells to a numeric or categorical array.

    A column is numeric when its first non-missing cell parses as a number;
    every other non-missing cell must then parse too.
    """
    present = [c for c in cells if c is not None]
    if not present:
        return np.full(len(cells), np.nan)
    series = pd.Series(cells, dtype=object)
    converted = pd.to_numeric(series, errors="coerce")
    first = next(i for i, c in enumerate(cells) if c is not None)
    if np.isnan(converted.iloc[first]):
        return np.array(cells, dtype=object)
    bad = np.flatnonzero(series.notna().to_numpy() & converted.isna().to_numpy())
    if bad.size:
        row = int(bad[0])
        raise DatasetError(
            f"Non-numeric value {cells[row]!r} in numeric column '{name}' "
            f"(data row {row + 1}, column {col_index + 1})"
        )
    return converted.to_numpy(dtype=float)


def load_csv(
    path: str,
    delimiter: str = ",",
    header: bool = True,
    na_markers: Sequence[str] = DEFAULT_NA_MARKERS,
) -> Dataset:
    """Load a delimited text file into a Dataset.

    Args:
        path: Path to a UTF-8 CSV file with RFC-4180 quoting
        delimiter: Field delimiter
        header: Whether the first row holds column names (else v1, v2, ...)
        na_markers: Cell contents recorded as missing

    Returns:
        Dataset with one column per header field

    Raises:
        DatasetError: On ragged rows, duplicate names or non-numeric cells
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise DatasetError(f"Data file not found: {path}")

    try:
        # absent trailing fields come back as NaN; present cells stay strings
        raw = pd.read_csv(
            file_path,
            sep=delimiter,
            header=None,
            dtype=str,
            encoding="utf-8",
            keep_default_na=False,
            skip_blank_lines=True,
            on_bad_lines="error",
        )
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"Data file is empty: {path}") from e
    except pd.errors.ParserError as e:
        raise DatasetError(f"Ragged row in {path}: {e}") from e

    short = raw.isna().to_numpy()
    if short.any():
        record = int(np.flatnonzero(short.any(axis=1))[0])
        raise DatasetError(
            f"Ragged row at record {record + 1} of {path}: expected {raw.shape[1]} fields, "
            f"found {raw.shape[1] - int(short[record].sum())}"
        )

    cells = raw.apply(lambda col: col.str.strip())
    if header:
        names = cells.iloc[0].tolist()
        cells = cells.iloc[1:]
    else:
        names = [f"v{i + 1}" for i in range(cells.shape[1])]
    duplicated = pd.Index(names).duplicated()
    if duplicated.any():
        raise DatasetError(f"Duplicate column name '{names[int(np.argmax(duplicated))]}' in {path}")
    if cells.empty:
        raise DatasetError(f"Data file has a header but no rows: {path}")

    cells = cells.mask(cells.isin(list(na_markers)))
    columns = {
        name: _parse_column(name, [None if pd.isna(c) else c for c in cells.iloc[:, j]], j)
        for j, name in enumerate(names)
    }
    logger.info(f"Loaded {len(cells)} rows and {len(names)} columns from {path}")
    return Dataset(columns)


def listwise_delete(ds: Dataset, names: Iterable[str]) -> Tuple[Dataset, int]:
    """Drop rows with a missing value in any of the named columns.

    Returns:
        (Dataset without incomplete rows, number of dropped rows)
    """
    used = list(dict.fromkeys(names))
    missing = np.zeros(ds.n_rows, dtype=bool)
    for name in used:
        missing |= _missing_mask(ds.column(name))
    dropped = int(missing.sum())
    if dropped == ds.n_rows:
        raise DatasetError("Every row has a missing value in a used column")
    if dropped:
        logger.info(f"Listwise deletion dropped {dropped} of {ds.n_rows} rows")
        ds = ds.take_rows(~missing)
    return ds, dropped


def _level_label(value: object) -> str:
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def one_hot_encode(ds: Dataset, column: str, drop_reference: bool = False) -> Dataset:
    """Replace a column by binary indicators named ``<column>_<level>``.

    Levels are ordered lexicographically; with ``drop_reference`` the first
    level is omitted. Missing cells stay missing in every indicator.
    """
    values = ds.column(column)
    missing = _missing_mask(values)
    labels = np.array(
        [None if m else _level_label(v) for v, m in zip(values, missing)], dtype=object
    )
    levels = sorted({label for label in labels if label is not None})
    if len(levels) < 2:
        raise DatasetError(f"Cannot encode '{column}': constant column with a single level")
    if drop_reference:
        levels = levels[1:]

    position = ds.names.index(column)
    new_columns: Dict[str, np.ndarray] = {}
    for level in levels:
        name = f"{column}_{level}"
        if name in ds and name != column:
            raise DatasetError(f"Encoding '{column}' would overwrite existing column '{name}'")
        dummy = (labels == level).astype(float)
        dummy[missing] = np.nan
        new_columns[name] = dummy

    ordered: Dict[str, np.ndarray] = {}
    for i, (name, col) in enumerate(ds.columns.items()):
        if i == position:
            ordered.update(new_columns)
        elif name not in new_columns:
            ordered[name] = col
    return dataclasses.replace(ds, columns=ordered)


@dataclass(frozen=True)
class ModelOptions:
    """Estimation options attached to a model."""

    robust: bool = False
    cluster: Optional[str] = None
    fe: bool = False
    seed: int = 0


@dataclass
class ModelSpec:
    """Role assignment of every column used by a model.

    ``treatments`` lists the coefficients of interest: exogenous focal
    variables plus endogenous variables. ``controls_unpenalized`` are
    controls carried with zero penalty loading through selection, while
    ``partial_out`` columns are partialled out before selection; both enter
    the final regression.
    """

    dependent: str
    treatments: List[str] = field(default_factory=list)
    focal_unpenalized: List[str] = field(default_factory=list)
    auxiliary_penalized: List[str] = field(default_factory=list)
    hd_controls_penalized: List[str] = field(default_factory=list)
    endogenous: List[str] = field(default_factory=list)
    instruments_penalized: List[str] = field(default_factory=list)
    instruments_unpenalized: List[str] = field(default_factory=list)
    amelioration_set: List[str] = field(default_factory=list)
    partial_out: List[str] = field(default_factory=list)
    controls_unpenalized: List[str] = field(default_factory=list)
    options: ModelOptions = field(default_factory=ModelOptions)

    @property
    def penalized_controls(self) -> List[str]:
        """Auxiliary and high-dimensional controls, in that order."""
        return self.auxiliary_penalized + self.hd_controls_penalized

    @property
    def instruments(self) -> List[str]:
        """All excluded instruments."""
        return self.instruments_unpenalized + self.instruments_penalized

    @property
    def exogenous_treatments(self) -> List[str]:
        """Treatments that are not endogenous."""
        endog = set(self.endogenous)
        return [t for t in self.treatments if t not in endog]

    def used_columns(self) -> List[str]:
        """Every column referenced by the model, in role order."""
        names = (
            [self.dependent]
            + self.treatments
            + self.penalized_controls
            + self.controls_unpenalized
            + self.partial_out
            + self.amelioration_set
            + self.instruments
        )
        if self.options.cluster:
            names.append(self.options.cluster)
        return list(dict.fromkeys(names))

    def validate(self, require_unpenalized: bool = False) -> None:
        """Check role disjointness and IV consistency.

        Args:
            require_unpenalized: True when a PDS, CHS or IV estimation is requested

        Raises:
            DatasetError: On any violated role invariant
        """
        roles = {
            "treatments": self.treatments,
            "auxiliary_penalized": self.auxiliary_penalized,
            "hd_controls_penalized": self.hd_controls_penalized,
            "instruments_penalized": self.instruments_penalized,
            "instruments_unpenalized": self.instruments_unpenalized,
            "amelioration_set": self.amelioration_set,
            "partial_out": self.partial_out,
            "controls_unpenalized": self.controls_unpenalized,
        }
        owner: Dict[str, str] = {self.dependent: "dependent"}
        for role, names in roles.items():
            if len(set(names)) != len(names):
                raise DatasetError(f"Role '{role}' lists a variable twice")
            for name in names:
                if name in owner:
                    raise DatasetError(
                        f"Variable '{name}' assigned to both {owner[name]} and {role}"
                    )
                owner[name] = role

        treatment_set = set(self.treatments)
        for name in self.focal_unpenalized + self.endogenous:
            if name not in treatment_set:
                raise DatasetError(f"Focal or endogenous variable '{name}' is not a treatment")
        overlap = set(self.focal_unpenalized) & set(self.endogenous)
        if overlap:
            raise DatasetError(f"Variables both focal and endogenous: {sorted(overlap)}")
        if self.endogenous and not self.instruments:
            raise DatasetError("Endogenous variables given without any instruments")
        if self.instruments and not self.endogenous:
            raise DatasetError("Instruments given without any endogenous variable")
        if require_unpenalized and not self.treatments:
            raise DatasetError(
                "Estimation requires at least one unpenalized regressor of interest"
            )


def encode_model_categoricals(ds: Dataset, spec: ModelSpec) -> Tuple[Dataset, ModelSpec]:
    """One-hot encode every categorical column the model uses.

    Penalized controls get the full dummy set; unpenalized roles drop the
    reference level. The cluster identifier stays categorical.

    Raises:
        DatasetError: If the dependent, an endogenous variable or an
            instrument is categorical
    """
    forbidden = {spec.dependent: "the dependent variable"}
    forbidden.update({name: "an endogenous variable" for name in spec.endogenous})
    forbidden.update({name: "an instrument" for name in spec.instruments})
    penalized = set(spec.penalized_controls)

    replacements: Dict[str, List[str]] = {}
    for name in spec.used_columns():
        if name == spec.options.cluster or not ds.is_categorical(name):
            continue
        if name in forbidden:
            raise DatasetError(f"Categorical column '{name}' cannot be used as {forbidden[name]}")
        before = set(ds.names)
        ds = one_hot_encode(ds, name, drop_reference=name not in penalized)
        replacements[name] = [n for n in ds.names if n not in before]
        logger.info(f"Encoded categorical '{name}' as {len(replacements[name])} indicators")
    if not replacements:
        return ds, spec

    def swap(names: List[str]) -> List[str]:
        out: List[str] = []
        for n in names:
            out.extend(replacements.get(n, [n]))
        return out

    spec = dataclasses.replace(
        spec,
        treatments=swap(spec.treatments),
        focal_unpenalized=swap(spec.focal_unpenalized),
        auxiliary_penalized=swap(spec.auxiliary_penalized),
        hd_controls_penalized=swap(spec.hd_controls_penalized),
        amelioration_set=swap(spec.amelioration_set),
        partial_out=swap(spec.partial_out),
        controls_unpenalized=swap(spec.controls_unpenalized),
    )
    return ds, spec


class ScaleFlag(Enum):
    """How a column was transformed by standardize()."""

    STANDARDIZED = "standardized"
    CENTERED = "centered"
    CONSTANT = "constant"
    UNTOUCHED = "untouched"


@dataclass(frozen=True)
class ColumnScale:
    """Mean and scale used for one column."""

    mean: float
    scale: float
    flag: ScaleFlag


@dataclass(frozen=True)
class StandardizationRecord:
    """Per-column means and scales for mapping coefficients back to data units."""

    entries: Mapping[str, ColumnScale]
    dependent: Optional[str] = None

    def __post_init__(self) -> None:
        for name, entry in self.entries.items():
            if entry.flag is ScaleFlag.STANDARDIZED and not entry.scale > 0:
                raise DatasetError(f"Standardized column '{name}' has non-positive scale")

    @property
    def regressors(self) -> List[str]:
        """Regressor columns kept after standardization, in order."""
        return [
            name
            for name, entry in self.entries.items()
            if name != self.dependent and entry.flag is not ScaleFlag.CONSTANT
        ]


def _is_constant(values: np.ndarray, mean: float, scale: float) -> bool:
    return scale <= 1e-12 * max(1.0, abs(mean))


def standardize_matrix(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center columns and scale them to unit variance with divisor N.

    Zero-variance columns are centered and left with scale 1.

    Returns:
        (standardized matrix, means, scales)
    """
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    centered = X - means
    scales = np.sqrt(np.mean(centered**2, axis=0))
    scales = np.where(scales > 1e-12 * np.maximum(1.0, np.abs(means)), scales, 1.0)
    return centered / scales, means, scales


def standardize(
    ds: Dataset,
    columns: Sequence[str],
    penalized: Optional[Iterable[str]] = None,
    dependent: Optional[str] = None,
) -> Tuple[Dataset, StandardizationRecord]:
    """Standardize columns to mean 0 and variance 1 (divisor N).

    The dependent variable is centered only. A constant penalized column is
    an error; a constant unpenalized column is dropped with a warning since
    the intercept absorbs it.

    Args:
        ds: Input dataset
        columns: Regressor columns to standardize
        penalized: Subset of columns exposed to the penalty (default: all)
        dependent: Optional dependent variable to center

    Returns:
        (transformed dataset, record of means and scales)
    """
    penalized_set = set(columns if penalized is None else penalized)
    updates: Dict[str, np.ndarray] = {}
    entries: Dict[str, ColumnScale] = {}
    dropped: List[str] = []

    if dependent is not None:
        y = ds.numeric(dependent)
        y_mean = float(y.mean())
        updates[dependent] = y - y_mean
        entries[dependent] = ColumnScale(y_mean, 1.0, ScaleFlag.CENTERED)

    for name in columns:
        x = ds.numeric(name)
        mean = float(x.mean())
        scale = float(np.sqrt(np.mean((x - mean) ** 2)))
        if _is_constant(x, mean, scale):
            if name in penalized_set:
                raise DatasetError(
                    f"Penalized column '{name}' is constant (zero scale) and cannot be standardized"
                )
            logger.warning(f"Dropping constant unpenalized column '{name}' (absorbed by intercept)")
            entries[name] = ColumnScale(mean, 0.0, ScaleFlag.CONSTANT)
            dropped.append(name)
            continue
        updates[name] = (x - mean) / scale
        entries[name] = ColumnScale(mean, scale, ScaleFlag.STANDARDIZED)

    out = ds.with_columns(updates).without_columns(dropped)
    return out, StandardizationRecord(entries, dependent)


def destandardize(
    coeffs: np.ndarray, record: StandardizationRecord
) -> Tuple[np.ndarray, float]:
    """Map standardized-scale coefficients back to original units.

    Args:
        coeffs: Coefficients indexed like ``record.regressors``
        record: Record produced by standardize()

    Returns:
        (original-scale coefficients, intercept)
    """
    names = record.regressors
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (len(names),):
        raise DatasetError(
            f"Coefficient vector of length {coeffs.size} does not match "
            f"{len(names)} standardized regressors"
        )
    means = np.array([record.entries[n].mean for n in names])
    scales = np.array([record.entries[n].scale for n in names])
    flags = [record.entries[n].flag for n in names]
    divisor = np.array([s if f is ScaleFlag.STANDARDIZED else 1.0 for s, f in zip(scales, flags)])
    centered = np.array([f in (ScaleFlag.STANDARDIZED, ScaleFlag.CENTERED) for f in flags])

    original = coeffs / divisor
    y_mean = record.entries[record.dependent].mean if record.dependent else 0.0
    intercept = float(y_mean - np.sum(original[centered] * means[centered]))
    return original, intercept
