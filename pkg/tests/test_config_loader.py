"""Tests for configuration loader."""

import tempfile
from pathlib import Path

import pytest
import yaml

from hdselect.config_loader import (
    THREADS_ENV_VAR,
    Config,
    ConfigError,
    load_config,
    load_config_from_env,
)


@pytest.fixture(autouse=True)
def _no_thread_override(monkeypatch):
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)


def test_defaults():
    """Test that an empty config falls back to the documented defaults."""
    config = Config()

    assert config.solver_tol == 1e-8
    assert config.solver_max_iter == 100_000
    assert config.path_n_points == 100
    assert config.path_min_ratio == 1e-4
    assert config.tuning_method == "rigorous"
    assert config.tuning_loadings == "robust"
    assert config.tuning_c == 1.1
    assert config.tuning_gamma is None
    assert config.tuning_cv_folds == 10
    assert config.inference_post == "pds"
    assert config.csv_na_markers == ["", "NA", "."]
    assert config.output_format == "json"
    assert config.threads == 1
    assert config.log_level == "WARNING"
    assert config.log_file_path is None


def test_sections_override_defaults():
    """Test that values in a section replace the defaults."""
    config = Config(
        {
            "solver": {"tol": 1e-10},
            "tuning": {"method": "cv", "cv_folds": 5, "gamma": 0.05},
            "csv": {"na_markers": [None, "missing"]},
        }
    )

    assert config.solver_tol == 1e-10
    assert config.tuning_method == "cv"
    assert config.tuning_cv_folds == 5
    assert config.tuning_gamma == 0.05
    assert config.csv_na_markers == ["", "missing"]


@pytest.mark.parametrize(
    "config_dict, key",
    [
        ({"solver": {"tol": 0}}, "solver.tol"),
        ({"solver": {"max_iter": 0}}, "solver.max_iter"),
        ({"path": {"n_points": 1}}, "path.n_points"),
        ({"path": {"min_ratio": 1.5}}, "path.min_ratio"),
        ({"tuning": {"method": "magic"}}, "tuning.method"),
        ({"tuning": {"loadings": "cluster"}}, "tuning.loadings"),
        ({"tuning": {"c": -1}}, "tuning.c"),
        ({"tuning": {"gamma": 1.0}}, "tuning.gamma"),
        ({"tuning": {"cv_folds": 1}}, "tuning.cv_folds"),
        ({"inference": {"post": "ols"}}, "inference.post"),
        ({"output": {"format": "xml"}}, "output.format"),
        ({"threads": 0}, "threads"),
    ],
)
def test_invalid_values(config_dict, key):
    """Test that out-of-range values name the offending key."""
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        Config(config_dict)


def test_section_must_be_mapping():
    """Test that a scalar where a section belongs raises."""
    with pytest.raises(ConfigError, match="'solver' must be a mapping"):
        Config({"solver": 3})


def test_config_error_is_tagged():
    """Test that config errors carry the config module tag."""
    with pytest.raises(ConfigError) as info:
        Config({"threads": -2})

    assert info.value.tagged().startswith("[config]")


@pytest.mark.parametrize("configured, cap, expected", [(2, "8", 2), (6, "4", 4), (1, "1", 1)])
def test_threads_env_caps(monkeypatch, configured, cap, expected):
    """Test that HDSELECT_THREADS caps the configured worker count without raising it."""
    monkeypatch.setenv(THREADS_ENV_VAR, cap)

    assert Config({"threads": configured}).threads == expected


def test_threads_env_invalid(monkeypatch):
    """Test that a non-integer HDSELECT_THREADS raises."""
    monkeypatch.setenv(THREADS_ENV_VAR, "many")

    with pytest.raises(ConfigError, match=THREADS_ENV_VAR):
        Config().threads


def test_config_from_yaml():
    """Test loading config from a YAML file."""
    with tempfile.NamedTemporaryFile(mode="w", suffix=".yaml", delete=False) as f:
        yaml.safe_dump({"tuning": {"method": "bic"}, "logging": {"level": "DEBUG"}}, f)
        config_path = f.name

    try:
        config = load_config(config_path)
        assert config.tuning_method == "bic"
        assert config.log_level == "DEBUG"
    finally:
        Path(config_path).unlink()


def test_config_file_missing(tmp_path):
    """Test that a missing file raises ConfigError."""
    with pytest.raises(ConfigError, match="Config file not found"):
        load_config(str(tmp_path / "absent.yaml"))


def test_config_invalid_yaml(tmp_path):
    """Test that malformed YAML raises ConfigError."""
    path = tmp_path / "broken.yaml"
    path.write_text("tuning: [unclosed\n", encoding="utf-8")

    with pytest.raises(ConfigError, match="Invalid YAML"):
        load_config(str(path))


def test_config_not_a_mapping(tmp_path):
    """Test that a YAML list at top level raises ConfigError."""
    path = tmp_path / "list.yaml"
    path.write_text("- a\n- b\n", encoding="utf-8")

    with pytest.raises(ConfigError, match="must contain a mapping"):
        load_config(str(path))


def test_config_empty_file(tmp_path):
    """Test that an empty file gives the defaults."""
    path = tmp_path / "empty.yaml"
    path.write_text("", encoding="utf-8")

    assert load_config(str(path)).tuning_method == "rigorous"


def test_config_from_env(tmp_path, monkeypatch):
    """Test loading the config file named by HDSELECT_CONFIG."""
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump({"output": {"format": "tsv"}}), encoding="utf-8")
    monkeypatch.setenv("HDSELECT_CONFIG", str(path))

    assert load_config_from_env().output_format == "tsv"


def test_config_from_env_unset(monkeypatch):
    """Test that an unset HDSELECT_CONFIG raises."""
    monkeypatch.delenv("HDSELECT_CONFIG", raising=False)

    with pytest.raises(ConfigError, match="HDSELECT_CONFIG"):
        load_config_from_env()
