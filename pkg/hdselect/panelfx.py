"""Panel transforms applied before estimation: within (fixed effects) and first differences."""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from hdselect.dataset import Dataset
from hdselect.errors import HDSError
from hdselect.logging_setup import get_logger

logger = get_logger()


class PanelError(HDSError):
    """Raised for an invalid panel designation."""

    module = "panelfx"


@dataclass(frozen=True)
class PanelIndex:
    """Group membership of every row, with optional time ordering."""

    panel_id: str
    time_id: Optional[str]
    codes: np.ndarray
    labels: np.ndarray

    @property
    def n_groups(self) -> int:
        """Number of panel units."""
        return int(self.labels.size)

    def groups(self) -> Dict[object, np.ndarray]:
        """Row indices of each group, keyed by group label."""
        return {label: np.flatnonzero(self.codes == g) for g, label in enumerate(self.labels)}

    @classmethod
    def from_dataset(
        cls, ds: Dataset, panel_id: Optional[str] = None, time_id: Optional[str] = None
    ) -> "PanelIndex":
        """Build the index from the dataset's panel and time columns.

        Raises:
            PanelError: If the panel column is missing or times repeat within a group
        """
        panel_id = panel_id or ds.panel_id
        time_id = time_id or ds.time_id
        if panel_id is None:
            raise PanelError("Panel transform requested without a panel identifier")
        if panel_id not in ds:
            raise PanelError(f"Panel identifier '{panel_id}' not found")
        ids = ds.column(panel_id)
        if ds.is_categorical(panel_id):
            if any(v is None for v in ids):
                raise PanelError(f"Panel identifier '{panel_id}' has missing values")
        elif np.isnan(ids).any():
            raise PanelError(f"Panel identifier '{panel_id}' has missing values")
        keys = ids.astype(str) if ds.is_categorical(panel_id) else ids
        labels, codes = np.unique(keys, return_inverse=True)

        if time_id is not None:
            if time_id not in ds:
                raise PanelError(f"Time identifier '{time_id}' not found")
            times = ds.numeric(time_id)
            if np.isnan(times).any():
                raise PanelError(f"Time identifier '{time_id}' has missing values")
            order = np.lexsort((times, codes))
            same_group = codes[order][1:] == codes[order][:-1]
            same_time = times[order][1:] == times[order][:-1]
            if np.any(same_group & same_time):
                raise PanelError(f"Time identifier '{time_id}' repeats within a panel unit")
        return cls(panel_id, time_id, codes, labels)


def _group_means(values: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    counts = np.bincount(codes, minlength=n_groups)
    sums = np.bincount(codes, weights=values, minlength=n_groups)
    return sums / counts


def within_transform(ds: Dataset, index: PanelIndex, columns: Sequence[str]) -> Dataset:
    """Subtract group means from each column.

    Groups with a single row become zeros; a warning is logged.
    """
    counts = np.bincount(index.codes, minlength=index.n_groups)
    singletons = int(np.sum(counts == 1))
    if singletons:
        logger.warning(f"{singletons} panel units have a single row and contribute only zeros")

    updates = {}
    for name in columns:
        values = ds.numeric(name)
        means = _group_means(values, index.codes, index.n_groups)
        updates[name] = values - means[index.codes]
    return ds.with_columns(updates)


def first_difference(
    ds: Dataset,
    index: PanelIndex,
    columns: Sequence[str],
    allow_gaps: bool = False,
) -> Dataset:
    """Difference columns within groups over time, dropping each group's first row.

    Rows come out sorted by group and time. Columns not listed keep the value
    of the later row of each pair. A gap is a time step larger than the
    smallest positive step in the panel.

    Raises:
        PanelError: Without a time identifier, or on gaps unless ``allow_gaps``
    """
    if index.time_id is None:
        raise PanelError("First differences need a time identifier")
    times = ds.numeric(index.time_id)
    order = np.lexsort((times, index.codes))
    sorted_codes = index.codes[order]
    sorted_times = times[order]

    later = np.flatnonzero(sorted_codes[1:] == sorted_codes[:-1]) + 1
    earlier = later - 1
    steps = sorted_times[later] - sorted_times[earlier]
    if steps.size:
        unit = steps.min()
        gaps = int(np.sum(steps > unit))
        if gaps:
            if not allow_gaps:
                raise PanelError(
                    f"{gaps} gaps in '{index.time_id}' within panel units; "
                    "pass allow_gaps to difference across them"
                )
            logger.warning(f"Differencing across {gaps} gaps in '{index.time_id}'")

    rows_later = order[later]
    rows_earlier = order[earlier]
    out = ds.take_rows(rows_later)
    updates = {
        name: ds.numeric(name)[rows_later] - ds.numeric(name)[rows_earlier] for name in columns
    }
    out = out.with_columns(updates)
    logger.info(f"First differences leave {out.n_rows} of {ds.n_rows} rows")
    return out


def absorbed_parameters(index: PanelIndex) -> int:
    """Degrees of freedom absorbed by the within transform."""
    return index.n_groups
