"""Rendering of run reports as canonical JSON or a TSV coefficient table."""

import json
import math
from importlib import resources
from typing import Any, Dict, List

import numpy as np

from hdselect.errors import HDSError
from hdselect.logging_setup import get_logger

logger = get_logger()

REPORT_SCHEMA_VERSION = "1.0"
SCHEMA_RESOURCE = "report.schema.json"
TSV_COLUMNS = ("term", "role", "coef", "se", "t", "ci_low", "ci_high")


class ReportError(HDSError):
    """Raised when a report cannot be rendered."""

    module = "report"


def to_plain(value: Any) -> Any:
    """Convert numpy values to JSON-ready Python values; NaN and Inf become None."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _tsv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_schema() -> Dict[str, Any]:
    """Load the JSON schema that every report validates against."""
    text = resources.files("hdselect").joinpath(SCHEMA_RESOURCE).read_text(encoding="utf-8")
    return json.loads(text)


class ReportFormatter:
    """Formats run reports."""

    def __init__(self, output_format: str = "json"):
        """Initialize formatter.

        Args:
            output_format: "json" or "tsv"
        """
        if output_format not in ("json", "tsv"):
            raise ReportError(f"Unknown output format '{output_format}'")
        self.output_format = output_format

    def format(self, report: Dict[str, Any]) -> str:
        """Render a report in the configured format."""
        if self.output_format == "tsv":
            return self.format_tsv(report)
        return self.format_json(report)

    def format_json(self, report: Dict[str, Any]) -> str:
        """Canonical JSON: sorted keys, fixed indentation, trailing newline."""
        body = dict(report)
        body["schema_version"] = REPORT_SCHEMA_VERSION
        try:
            return json.dumps(to_plain(body), sort_keys=True, indent=2, allow_nan=False) + "\n"
        except (TypeError, ValueError) as e:
            raise ReportError(f"Report is not serializable: {e}") from e

    def format_tsv(self, report: Dict[str, Any]) -> str:
        """Coefficient table, one row per term; missing values are empty cells."""
        lines: List[str] = ["\t".join(TSV_COLUMNS)]
        for row in to_plain(report.get("coefficients", [])):
            lines.append("\t".join(_tsv_cell(row.get(column)) for column in TSV_COLUMNS))
        logger.debug(f"Rendered {len(lines) - 1} coefficient rows as TSV")
        return "\n".join(lines) + "\n"
