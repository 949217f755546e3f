"""Configuration loader for hdselect runs."""

import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from hdselect.errors import HDSError

TUNING_METHODS = ("rigorous", "cv", "aic", "bic", "ebic")
LOADING_MODES = ("iid", "robust")
SE_MODES = ("iid", "robust", "cluster")
POST_METHODS = ("pds", "chs-lasso", "chs-post")
OUTPUT_FORMATS = ("json", "tsv")
THREADS_ENV_VAR = "HDSELECT_THREADS"


class ConfigError(HDSError):
    """Raised when config validation fails."""

    module = "config"


class Config:
    """Configuration object for hdselect runs.

    Every key is optional; properties fall back to the documented defaults
    in ``config.template.yaml``.
    """

    def __init__(self, config_dict: Optional[Dict[str, Any]] = None):
        """Initialize config from dictionary."""
        self._config = config_dict or {}
        self._validate()

    def _section(self, name: str) -> Dict[str, Any]:
        section = self._config.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"Config section '{name}' must be a mapping")
        return section

    def _validate(self) -> None:
        """Validate value ranges and enumerations."""
        if self.solver_tol <= 0:
            raise ConfigError("Config key 'solver.tol' must be positive")
        if self.solver_max_iter < 1:
            raise ConfigError("Config key 'solver.max_iter' must be at least 1")
        if self.path_n_points < 2:
            raise ConfigError("Config key 'path.n_points' must be at least 2")
        if not 0 < self.path_min_ratio < 1:
            raise ConfigError("Config key 'path.min_ratio' must lie in (0, 1)")
        if self.tuning_method not in TUNING_METHODS:
            raise ConfigError(
                f"Config key 'tuning.method' must be one of {', '.join(TUNING_METHODS)}"
            )
        if self.tuning_loadings not in LOADING_MODES:
            raise ConfigError(
                f"Config key 'tuning.loadings' must be one of {', '.join(LOADING_MODES)}"
            )
        if self.tuning_c <= 0:
            raise ConfigError("Config key 'tuning.c' must be positive")
        gamma = self.tuning_gamma
        if gamma is not None and not 0 < gamma < 1:
            raise ConfigError("Config key 'tuning.gamma' must lie in (0, 1)")
        if self.tuning_cv_folds < 2:
            raise ConfigError("Config key 'tuning.cv_folds' must be at least 2")
        if self.inference_post not in POST_METHODS:
            raise ConfigError(
                f"Config key 'inference.post' must be one of {', '.join(POST_METHODS)}"
            )
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(
                f"Config key 'output.format' must be one of {', '.join(OUTPUT_FORMATS)}"
            )
        threads = self._config.get("threads", 1)
        if not isinstance(threads, int) or threads < 1:
            raise ConfigError("Config key 'threads' must be a positive integer")

    @property
    def solver_tol(self) -> float:
        """Get coordinate-descent tolerance on the max coefficient change."""
        return float(self._section("solver").get("tol", 1e-8))

    @property
    def solver_kkt_tol(self) -> float:
        """Get tolerance for the final KKT sweep."""
        return float(self._section("solver").get("kkt_tol", 1e-6))

    @property
    def solver_max_iter(self) -> int:
        """Get maximum number of full coordinate sweeps."""
        return int(self._section("solver").get("max_iter", 100_000))

    @property
    def path_n_points(self) -> int:
        """Get number of points on the regularization path grid."""
        return int(self._section("path").get("n_points", 100))

    @property
    def path_min_ratio(self) -> float:
        """Get smallest lambda on the grid as a fraction of lambda_max."""
        return float(self._section("path").get("min_ratio", 1e-4))

    @property
    def tuning_method(self) -> str:
        """Get the default lambda selection method."""
        return self._section("tuning").get("method", "rigorous")

    @property
    def tuning_loadings(self) -> str:
        """Get loading type for rigorous tuning when no cluster is given."""
        return self._section("tuning").get("loadings", "robust")

    @property
    def tuning_c(self) -> float:
        """Get the slack constant c of the plug-in penalty."""
        return float(self._section("tuning").get("c", 1.1))

    @property
    def tuning_gamma(self) -> Optional[float]:
        """Get gamma of the plug-in penalty.

        Returns:
            Gamma, or None to use 0.1 / ln(N)
        """
        gamma = self._section("tuning").get("gamma")
        return None if gamma is None else float(gamma)

    @property
    def tuning_max_rounds(self) -> int:
        """Get maximum number of loading iterations."""
        return int(self._section("tuning").get("max_rounds", 15))

    @property
    def tuning_cv_folds(self) -> int:
        """Get number of cross-validation folds."""
        return int(self._section("tuning").get("cv_folds", 10))

    @property
    def tuning_ebic_xi(self) -> float:
        """Get the xi parameter of the extended BIC."""
        return float(self._section("tuning").get("ebic_xi", 1.0))

    @property
    def inference_post(self) -> str:
        """Get the default estimator for pds-type runs."""
        return self._section("inference").get("post", "pds")

    @property
    def csv_delimiter(self) -> str:
        """Get CSV delimiter."""
        return self._section("csv").get("delimiter", ",")

    @property
    def csv_na_markers(self) -> List[str]:
        """Get markers read as missing values."""
        markers = self._section("csv").get("na_markers", ["", "NA", "."])
        return ["" if m is None else str(m) for m in markers]

    @property
    def output_format(self) -> str:
        """Get report format."""
        return self._section("output").get("format", "json")

    @property
    def output_full(self) -> bool:
        """Get whether nuisance coefficients are reported."""
        return bool(self._section("output").get("full", False))

    @property
    def threads(self) -> int:
        """Get worker count, capped by the HDSELECT_THREADS environment variable."""
        threads = int(self._config.get("threads", 1))
        env_value = os.getenv(THREADS_ENV_VAR)
        if env_value:
            try:
                cap = int(env_value)
            except ValueError as e:
                raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {env_value!r}") from e
            if cap < 1:
                raise ConfigError(f"{THREADS_ENV_VAR} must be at least 1")
            threads = min(threads, cap)
        return threads

    @property
    def log_file_path(self) -> Optional[str]:
        """Get log file path, or None for console-only logging."""
        return self._section("logging").get("file_path")

    @property
    def log_level(self) -> str:
        """Get log level."""
        return self._section("logging").get("level", "WARNING")

    @property
    def log_rotation_enabled(self) -> bool:
        """Get whether log rotation is enabled."""
        return self._section("logging").get("rotation_enabled", True)

    @property
    def log_max_size_mb(self) -> int:
        """Get max log file size in MB before rotation."""
        return self._section("logging").get("max_size_mb", 10)

    @property
    def log_backup_count(self) -> int:
        """Get number of backup log files to keep."""
        return self._section("logging").get("backup_count", 5)

    def to_dict(self) -> Dict[str, Any]:
        """Return config as dictionary."""
        return self._config.copy()


def load_config(config_path: str) -> Config:
    """Load configuration from YAML file.

    Args:
        config_path: Path to config.yaml file

    Returns:
        Config object

    Raises:
        ConfigError: If config file doesn't exist or is invalid
    """
    path = Path(config_path)

    if not path.exists():
        error_msg = f"Config file not found: {config_path}\n"
        if Path("config.template.yaml").exists():
            error_msg += "Copy config.template.yaml to config.yaml and edit it.\n"
        raise ConfigError(error_msg)

    try:
        with open(path, "r", encoding="utf-8") as f:
            config_dict = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in {config_path}: {e}") from e

    if not isinstance(config_dict, dict):
        raise ConfigError(f"Config file {config_path} must contain a mapping")

    return Config(config_dict)


def load_config_from_env(env_var: str = "HDSELECT_CONFIG") -> Config:
    """Load configuration from environment variable.

    Args:
        env_var: Name of environment variable containing config path

    Returns:
        Config object

    Raises:
        ConfigError: If environment variable not set or config invalid
    """
    config_path = os.getenv(env_var)
    if not config_path:
        raise ConfigError(f"Environment variable {env_var} not set")

    return load_config(config_path)
