"""Main entry point: parse a model, run an estimator, write a report."""

import argparse
import dataclasses
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numba
import numpy as np
import pandas as pd
import scipy

from hdselect import __version__
from hdselect.config_loader import (
    OUTPUT_FORMATS,
    POST_METHODS,
    TUNING_METHODS,
    Config,
    ConfigError,
    load_config,
    load_config_from_env,
)
from hdselect.dataset import (
    Dataset,
    DatasetError,
    ModelSpec,
    StandardizationRecord,
    destandardize,
    encode_model_categoricals,
    listwise_delete,
    load_csv,
    standardize,
)
from hdselect.errors import HDSError
from hdselect.inference import (
    CHSVariant,
    EquationSelection,
    HDProblem,
    PDSResult,
    run_chs,
    run_pds,
)
from hdselect.ivhds import FIRST_STAGE_MODES, IVResult, run_iv_lasso
from hdselect.logging_setup import get_logger, setup_logging
from hdselect.model_parser import ModelSyntaxError, ParseOptions, parse_model
from hdselect.panelfx import PanelIndex, absorbed_parameters, first_difference, within_transform
from hdselect.postsel import post_lasso_ols
from hdselect.regression_utils import SEMode
from hdselect.report_formatter import ReportFormatter
from hdselect.solver import (
    PenaltyConfig,
    fit_ridge,
    is_sparse_solution,
    regularization_path,
    ridge_effective_df,
    sparsity_index,
)
from hdselect.tuning import (
    LoadingMode,
    TunerConfig,
    TuningMethod,
    TuningResult,
    information_criteria,
    select_by_ic,
    tune_lasso,
)

logger = get_logger()

COMMANDS = ("lasso", "ridge", "path", "pds", "chs", "ivlasso")
PENALIZED_COMMANDS = ("lasso", "ridge", "path")
CONFIG_ENV_VAR = "HDSELECT_CONFIG"

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_NUMERIC_ERROR = 2
EXIT_INTERRUPTED = 130


@dataclass
class RunConfig:
    """One command-line invocation.

    Options left as None fall back to the YAML configuration.
    """

    command: str
    data_path: str
    model: str
    config_path: Optional[str] = None
    pnotpen: List[str] = field(default_factory=list)
    aset: List[str] = field(default_factory=list)
    partial: List[str] = field(default_factory=list)
    robust: bool = False
    cluster: Optional[str] = None
    fe: bool = False
    fd: bool = False
    allow_gaps: bool = False
    panel: Optional[str] = None
    time: Optional[str] = None
    post: Optional[str] = None
    tune: Optional[str] = None
    lam: Optional[float] = None
    folds: Optional[int] = None
    seed: int = 0
    output_format: Optional[str] = None
    out: Optional[str] = None
    full: bool = False
    first: bool = False
    noconstant: bool = False
    iv_first_stage: str = "post"
    delimiter: Optional[str] = None
    na: List[str] = field(default_factory=list)
    log_level: Optional[str] = None

    def validate(self) -> None:
        """Check option values and combinations.

        Raises:
            ConfigError: On an invalid option
        """
        if self.command not in COMMANDS:
            raise ConfigError(f"Unknown command '{self.command}'")
        if self.fe and self.fd:
            raise ConfigError("--fe and --fd are mutually exclusive")
        if self.post is not None and self.post not in POST_METHODS:
            raise ConfigError(f"--post must be one of {', '.join(POST_METHODS)}")
        if self.tune is not None and self.tune not in TUNING_METHODS:
            raise ConfigError(f"--tune must be one of {', '.join(TUNING_METHODS)}")
        if self.iv_first_stage not in FIRST_STAGE_MODES:
            raise ConfigError(f"--iv-first-stage must be one of {', '.join(FIRST_STAGE_MODES)}")
        if self.output_format is not None and self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(f"--format must be one of {', '.join(OUTPUT_FORMATS)}")
        if self.lam is not None and not (np.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError("--lambda must be a finite value >= 0")
        if self.folds is not None and self.folds < 2:
            raise ConfigError("--folds must be at least 2")
        if self.command == "ridge" and self.lam is None:
            raise ConfigError("ridge needs a penalty level: pass --lambda")
        if self.command == "chs" and self.post == "pds":
            raise ConfigError("The chs command takes --post chs-lasso or chs-post")

    def provenance_options(self) -> Dict[str, Any]:
        """Options recorded in the report, excluding output and logging destinations."""
        skip = {"command", "data_path", "model", "out", "log_level", "config_path"}
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in skip}


def write_atomic(path: str, text: str) -> None:
    """Write text to a temporary sibling file, then move it into place."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(target.suffix + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, target)
    finally:
        if tmp.exists():
            tmp.unlink()


def _tuning_entry(step: str, selection: EquationSelection, n: int) -> Dict[str, Any]:
    tuning = selection.tuning
    s = len(selection.selected)
    return {
        "step": step,
        "method": None if tuning is None else tuning.method.value,
        "lambda": selection.lam,
        "iterations": 0 if tuning is None else tuning.iterations,
        "sparsity": s,
        "sparse_solution": is_sparse_solution(s, len(selection.column_names), n),
        "loadings": selection.loadings_by_name(),
    }


class EstimationRunner:
    """Runs one estimation from data file to report."""

    def __init__(self, run_config: RunConfig, config: Optional[Config] = None):
        """Initialize runner.

        Args:
            run_config: Command-line invocation
            config: Settings; loaded from --config or HDSELECT_CONFIG when omitted
        """
        run_config.validate()
        self.run_config = run_config
        self.config = config if config is not None else self._load_config()
        setup_logging(
            self.config.log_file_path,
            run_config.log_level or self.config.log_level,
            max_bytes=self.config.log_max_size_mb * 1024 * 1024,
            backup_count=self.config.log_backup_count,
            rotation_enabled=self.config.log_rotation_enabled,
        )
        self.threads = self.config.threads

    def _load_config(self) -> Config:
        if self.run_config.config_path:
            return load_config(self.run_config.config_path)
        if os.getenv(CONFIG_ENV_VAR):
            logger.info(f"Loading config from {CONFIG_ENV_VAR}")
            return load_config_from_env(CONFIG_ENV_VAR)
        return Config()

    @property
    def output_format(self) -> str:
        """Output format after applying --format over the config."""
        return self.run_config.output_format or self.config.output_format

    @property
    def se_mode(self) -> SEMode:
        """Variance estimator implied by --cluster and --robust."""
        if self.run_config.cluster:
            return SEMode.CLUSTER
        if self.run_config.robust:
            return SEMode.ROBUST
        return SEMode.IID

    def tuner(self, clusters: Optional[np.ndarray]) -> TunerConfig:
        """Penalty settings: config values overridden by command-line flags."""
        rc, cfg = self.run_config, self.config
        return TunerConfig(
            method=TuningMethod(rc.tune or cfg.tuning_method),
            loading_mode=LoadingMode(cfg.tuning_loadings),
            clusters=clusters if rc.cluster else None,
            c=cfg.tuning_c,
            gamma=cfg.tuning_gamma,
            max_rounds=cfg.tuning_max_rounds,
            cv_folds=rc.folds or cfg.tuning_cv_folds,
            seed=rc.seed,
            ebic_xi=cfg.tuning_ebic_xi,
            n_points=cfg.path_n_points,
            min_ratio=cfg.path_min_ratio,
            fixed_lambda=rc.lam,
            tol=cfg.solver_tol,
            kkt_tol=cfg.solver_kkt_tol,
            max_iter=cfg.solver_max_iter,
            threads=self.threads,
        )

    def run(self) -> Dict[str, Any]:
        """Execute the pipeline and return the report.

        Raises:
            HDSError: Tagged with the module where the run failed
        """
        rc = self.run_config
        logger.info(f"Starting {rc.command} on {rc.data_path}")
        delimiter = rc.delimiter or self.config.csv_delimiter
        na_markers = rc.na or self.config.csv_na_markers
        ds = load_csv(rc.data_path, delimiter=delimiter, na_markers=na_markers)

        options = ParseOptions(
            pnotpen=rc.pnotpen,
            aset=rc.aset,
            partial=rc.partial,
            robust=rc.robust,
            cluster=rc.cluster,
            fe=rc.fe,
            seed=rc.seed,
        )
        spec = parse_model(rc.model, ds.names, options)
        self._check_command(spec)

        id_columns = [c for c in (rc.panel, rc.time) if c]
        for name in id_columns:
            if name not in ds:
                raise DatasetError(f"Panel or time identifier '{name}' not found")
        ds, n_dropped = listwise_delete(ds, spec.used_columns() + id_columns)
        ds, spec = encode_model_categoricals(ds, spec)
        ds, absorbed, intercept = self._panel_transform(ds, spec)

        if rc.command in PENALIZED_COMMANDS:
            report = self._run_penalized(ds, spec, intercept)
        else:
            report = self._run_inference(ds, spec, intercept, absorbed)
        report["command"] = rc.command
        report["n_dropped"] = n_dropped
        report["provenance"] = self._provenance()
        logger.info(f"Finished {rc.command}: {report['n_used']} rows used")
        return report

    def _check_command(self, spec: ModelSpec) -> None:
        command = self.run_config.command
        if command in PENALIZED_COMMANDS:
            if spec.endogenous:
                raise ModelSyntaxError(
                    f"'(endogenous = instruments)' groups are not valid with {command}"
                )
            if not spec.penalized_controls and command != "ridge":
                raise ModelSyntaxError(
                    f"{command} needs penalized regressors listed in parentheses"
                )
            return
        if command in ("pds", "chs") and spec.instruments:
            raise ModelSyntaxError(f"Instruments are not valid with {command}; use ivlasso")
        try:
            spec.validate(require_unpenalized=True)
        except DatasetError as e:
            raise ModelSyntaxError(str(e)) from e

    def _panel_transform(self, ds: Dataset, spec: ModelSpec) -> Tuple[Dataset, int, bool]:
        rc = self.run_config
        intercept = not rc.noconstant
        if not (spec.options.fe or rc.fd):
            return ds, 0, intercept
        index = PanelIndex.from_dataset(ds, rc.panel, rc.time)
        columns = [c for c in spec.used_columns() if c != spec.options.cluster]
        if rc.fd:
            return first_difference(ds, index, columns, allow_gaps=rc.allow_gaps), 0, intercept
        logger.info(f"Within transform over {index.n_groups} panel units")
        return within_transform(ds, index, columns), absorbed_parameters(index), False

    def _clusters(self, ds: Dataset) -> Optional[np.ndarray]:
        name = self.run_config.cluster
        if name is None:
            return None
        values = ds.column(name)
        return values.astype(str) if ds.is_categorical(name) else values

    def _penalized_design(
        self, ds: Dataset, spec: ModelSpec
    ) -> Tuple[np.ndarray, np.ndarray, List[str], List[int], StandardizationRecord]:
        penalized = spec.penalized_controls
        unpenalized = (
            spec.treatments + spec.controls_unpenalized + spec.partial_out + spec.amelioration_set
        )
        std, record = standardize(
            ds, unpenalized + penalized, penalized=penalized, dependent=spec.dependent
        )
        names = record.regressors
        free = set(unpenalized)
        return (
            std.matrix(names),
            std.numeric(spec.dependent),
            names,
            [j for j, name in enumerate(names) if name in free],
            record,
        )

    def _run_penalized(self, ds: Dataset, spec: ModelSpec, intercept: bool) -> Dict[str, Any]:
        X, y, names, free, record = self._penalized_design(ds, spec)
        n, p = X.shape
        command = self.run_config.command
        free_set = set(free)
        roles = ["unpenalized" if j in free_set else "penalized" for j in range(p)]
        report: Dict[str, Any] = {"n_used": n, "dof": n - p - int(intercept)}

        if command == "ridge":
            penalty = PenaltyConfig.uniform(self.run_config.lam, p, free)
            coeffs = fit_ridge(X, y, penalty)
            original, icpt = destandardize(coeffs, record)
            s = sparsity_index(coeffs)
            report.update(
                estimator="ridge",
                intercept=icpt if intercept else None,
                effective_df=ridge_effective_df(X, penalty),
                coefficients=[
                    {"term": name, "role": role, "coef": c}
                    for name, role, c in zip(names, roles, original)
                ],
                tuning=[
                    {
                        "step": "ridge",
                        "method": TuningMethod.FIXED.value,
                        "lambda": penalty.lam,
                        "sparsity": s,
                        "sparse_solution": is_sparse_solution(s, p, n),
                        "loadings": dict(zip(names, penalty.loadings)),
                    }
                ],
            )
            return report

        tuner = self.tuner(self._clusters(ds))
        if command == "path":
            return self._run_path(X, y, names, roles, free, record, tuner, report)

        result = tune_lasso(X, y, tuner, unpenalized=free)
        fit = result.fit
        original, icpt = destandardize(fit.coefficients, record)
        refit = post_lasso_ols(X, y, fit.active_set, free)
        post_original, post_icpt = destandardize(refit.coefficients, record)
        s = sparsity_index(fit.coefficients)
        report.update(
            estimator="lasso",
            intercept=icpt if intercept else None,
            post_lasso_intercept=post_icpt if intercept else None,
            coefficients=[
                {"term": name, "role": role, "coef": c, "post_coef": pc}
                for name, role, c, pc in zip(names, roles, original, post_original)
            ],
            information_criteria=information_criteria(X, y, fit.coefficients, tuner.ebic_xi),
            tuning=[self._lasso_tuning_entry(result, names, n, is_sparse_solution(s, p, n))],
            converged=fit.converged,
            kkt_violation=fit.kkt_violation,
        )
        return report

    @staticmethod
    def _lasso_tuning_entry(
        result: TuningResult, names: List[str], n: int, sparse: bool
    ) -> Dict[str, Any]:
        fit = result.fit
        return {
            "step": "lasso",
            "method": result.method.value,
            "lambda": result.chosen_lambda,
            "iterations": result.iterations,
            "sparsity": 0 if fit is None else fit.sparsity,
            "sparse_solution": sparse,
            "loadings": dict(zip(names, result.loadings)),
        }

    def _run_path(
        self,
        X: np.ndarray,
        y: np.ndarray,
        names: List[str],
        roles: List[str],
        free: List[int],
        record: StandardizationRecord,
        tuner: TunerConfig,
        report: Dict[str, Any],
    ) -> Dict[str, Any]:
        loadings = PenaltyConfig.uniform(0.0, X.shape[1], free).loadings
        path = regularization_path(
            X,
            y,
            loadings,
            n_points=tuner.n_points,
            min_ratio=tuner.min_ratio,
            tol=tuner.tol,
            max_iter=tuner.max_iter,
            kkt_tol=tuner.kkt_tol,
        )
        criteria = (TuningMethod.AIC, TuningMethod.BIC, TuningMethod.EBIC)
        choices = {c.value: select_by_ic(path, X, y, c, xi=tuner.ebic_xi) for c in criteria}
        points = []
        for i, (lam, fit) in enumerate(zip(path.lambdas, path.fits)):
            original, _ = destandardize(fit.coefficients, record)
            point = {
                "lambda": lam,
                "n_active": fit.sparsity,
                "l1_norm": float(np.sum(np.abs(fit.coefficients))),
                "coefficients": dict(zip(names, original)),
            }
            for key, choice in choices.items():
                point[key] = choice.diagnostics["scores"][i]
            points.append(point)

        bic = choices[TuningMethod.BIC.value]
        bic_original, _ = destandardize(bic.fit.coefficients, record)
        report.update(
            estimator="lasso-path",
            lambda_max=path.lambda_max,
            selected_lambda={key: choice.chosen_lambda for key, choice in choices.items()},
            path=points,
            coefficients=[
                {"term": name, "role": role, "coef": c}
                for name, role, c in zip(names, roles, bic_original)
            ],
        )
        return report

    def _problem(
        self, ds: Dataset, spec: ModelSpec, intercept: bool, absorbed: int
    ) -> HDProblem:
        return HDProblem.from_dataset(
            ds,
            spec.dependent,
            spec.treatments,
            controls=spec.penalized_controls,
            controls_unpenalized=spec.controls_unpenalized,
            partial=spec.partial_out,
            amelioration=spec.amelioration_set,
            instruments=spec.instruments_penalized,
            instruments_unpenalized=spec.instruments_unpenalized,
            endogenous=spec.endogenous,
            cluster=spec.options.cluster,
            intercept=intercept,
            absorbed_dof=absorbed,
        )

    def _estimator(self) -> str:
        rc = self.run_config
        if rc.command == "ivlasso":
            return f"ivlasso-2sls-{rc.iv_first_stage}"
        if rc.command == "chs":
            return rc.post or "chs-post"
        return rc.post or self.config.inference_post

    def _run_inference(
        self, ds: Dataset, spec: ModelSpec, intercept: bool, absorbed: int
    ) -> Dict[str, Any]:
        rc = self.run_config
        problem = self._problem(ds, spec, intercept, absorbed)
        tuner = self.tuner(problem.clusters)
        estimator = self._estimator()

        result: PDSResult
        if rc.command == "ivlasso":
            result = run_iv_lasso(
                problem, tuner, self.se_mode, first_stage=rc.iv_first_stage, threads=self.threads
            )
        elif estimator == "pds":
            result = run_pds(problem, tuner, self.se_mode, threads=self.threads)
        else:
            variant = CHSVariant.LASSO if estimator == "chs-lasso" else CHSVariant.POST_LASSO
            result = run_chs(problem, variant, tuner, self.se_mode, threads=self.threads)
        return self._inference_report(result, problem, estimator)

    def _inference_report(
        self, result: PDSResult, problem: HDProblem, estimator: str
    ) -> Dict[str, Any]:
        endogenous = set(problem.endogenous)
        ci = result.conf_int(0.95)
        coefficients = [
            {
                "term": name,
                "role": "endogenous" if name in endogenous else "focal",
                "coef": a,
                "se": se,
                "t": t,
                "ci_low": lo,
                "ci_high": hi,
            }
            for name, a, se, t, (lo, hi) in zip(
                result.treatment_names, result.alpha, result.std_errors, result.t_stats, ci
            )
        ]
        selection: Dict[str, Any] = {
            "step1": result.selected_step1,
            "step2": result.selected_step2,
            "union_controls": result.union_controls,
            "amelioration": problem.amelioration_names,
            "controls_unpenalized": problem.controls_unpenalized_names,
            "partial": problem.partial_names,
        }
        report: Dict[str, Any] = {
            "estimator": estimator,
            "se_mode": result.se_mode.value,
            "n_used": result.n_used,
            "dof": result.dof,
            "coefficients": coefficients,
            "selection": selection,
            "tuning": [
                _tuning_entry(step, sel, result.n_used) for step, sel in result.steps.items()
            ],
        }
        if result.naive_alpha is not None:
            report["naive_ols"] = dict(zip(result.treatment_names, result.naive_alpha))
        if self.run_config.full or self.config.output_full:
            report["nuisance"] = result.nuisance
        if isinstance(result, IVResult):
            selection["instruments"] = result.selected_instruments
            if self.run_config.first:
                report["first_stage"] = {
                    name: dataclasses.asdict(stats) for name, stats in result.first_stage.items()
                }
        return report

    def _provenance(self) -> Dict[str, Any]:
        rc, cfg = self.run_config, self.config
        settings = {
            "tuning_method": rc.tune or cfg.tuning_method,
            "loadings": cfg.tuning_loadings,
            "c": cfg.tuning_c,
            "gamma": cfg.tuning_gamma,
            "max_rounds": cfg.tuning_max_rounds,
            "ebic_xi": cfg.tuning_ebic_xi,
            "solver_tol": cfg.solver_tol,
            "solver_max_iter": cfg.solver_max_iter,
            "path_n_points": cfg.path_n_points,
            "path_min_ratio": cfg.path_min_ratio,
            "se_mode": self.se_mode.value,
        }
        return {
            "package": f"hdselect {__version__}",
            "versions": {
                "hdselect": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pandas": pd.__version__,
                "numba": numba.__version__,
            },
            "command": rc.command,
            "model": rc.model,
            "data": rc.data_path,
            "seed": rc.seed,
            "options": {**rc.provenance_options(), "settings": settings},
        }


def run(config: RunConfig) -> Tuple[int, str]:
    """Run one invocation.

    Returns:
        (exit code, report text on success or tagged error message)
    """
    try:
        runner = EstimationRunner(config)
        report = runner.run()
        return EXIT_OK, ReportFormatter(runner.output_format).format(report)
    except KeyboardInterrupt:
        logger.info("Run interrupted by user")
        return EXIT_INTERRUPTED, "Interrupted"
    except HDSError as e:
        logger.error(e.tagged())
        return (EXIT_NUMERIC_ERROR if e.numeric else EXIT_USER_ERROR), e.tagged()
    except np.linalg.LinAlgError as e:
        logger.error(f"Linear algebra failure: {e}")
        return EXIT_NUMERIC_ERROR, f"[linalg] {e}"


def build_parser() -> argparse.ArgumentParser:
    """Command-line parser."""
    parser = argparse.ArgumentParser(
        prog="hdselect",
        description="High-dimensional sparse regression and post-selection inference",
    )
    parser.add_argument("command", choices=COMMANDS, help="Estimator to run")
    parser.add_argument("data", help="Path to the CSV data file")
    parser.add_argument("model", help='Model string, e.g. "y d (c*)" or "y (d = z*) (c*)"')
    parser.add_argument("--config", type=str, help="Path to a YAML config file")
    parser.add_argument("--pnotpen", nargs="+", default=[], help="Unpenalized controls")
    parser.add_argument("--aset", nargs="+", default=[], help="Controls forced into the final fit")
    parser.add_argument("--partial", nargs="+", default=[], help="Controls partialled out")
    parser.add_argument("--robust", action="store_true", help="Heteroskedasticity-robust SEs")
    parser.add_argument("--cluster", type=str, help="Cluster variable for SEs and loadings")
    parser.add_argument("--fe", action="store_true", help="Within (fixed-effects) transform")
    parser.add_argument("--fd", action="store_true", help="First-difference transform")
    parser.add_argument(
        "--allow-gaps", action="store_true", help="Difference across gaps in the time variable"
    )
    parser.add_argument("--panel", type=str, help="Panel identifier column")
    parser.add_argument("--time", type=str, help="Time identifier column")
    parser.add_argument("--post", choices=POST_METHODS, help="Inference method")
    parser.add_argument("--tune", choices=TUNING_METHODS, help="Penalty selection method")
    parser.add_argument("--lambda", dest="lam", type=float, help="Fixed penalty level")
    parser.add_argument("--folds", type=int, help="Number of cross-validation folds")
    parser.add_argument("--seed", type=int, default=0, help="Seed for cross-validation folds")
    parser.add_argument("--format", dest="output_format", choices=OUTPUT_FORMATS)
    parser.add_argument("--out", type=str, help="Write the report here instead of stdout")
    parser.add_argument("--full", action="store_true", help="Report nuisance coefficients")
    parser.add_argument("--first", action="store_true", help="Report the IV first stage")
    parser.add_argument("--noconstant", action="store_true", help="Omit the intercept")
    parser.add_argument(
        "--iv-first-stage",
        choices=FIRST_STAGE_MODES,
        default="post",
        help="First-stage fitted values from post-LASSO OLS or from the LASSO",
    )
    parser.add_argument("--delimiter", type=str, help="CSV field delimiter")
    parser.add_argument(
        "--na", action="append", default=[], help="Missing-value marker (repeatable)"
    )
    parser.add_argument(
        "--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"), help="Logging level"
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point.

    Returns:
        Exit code (0 success, 1 user error, 2 numeric failure, 130 interrupted)
    """
    args = build_parser().parse_args(argv)
    config = RunConfig(
        command=args.command,
        data_path=args.data,
        model=args.model,
        config_path=args.config,
        pnotpen=args.pnotpen,
        aset=args.aset,
        partial=args.partial,
        robust=args.robust,
        cluster=args.cluster,
        fe=args.fe,
        fd=args.fd,
        allow_gaps=args.allow_gaps,
        panel=args.panel,
        time=args.time,
        post=args.post,
        tune=args.tune,
        lam=args.lam,
        folds=args.folds,
        seed=args.seed,
        output_format=args.output_format,
        out=args.out,
        full=args.full,
        first=args.first,
        noconstant=args.noconstant,
        iv_first_stage=args.iv_first_stage,
        delimiter=args.delimiter,
        na=args.na,
        log_level=args.log_level,
    )
    code, text = run(config)
    if code != EXIT_OK:
        print(text, file=sys.stderr)
        return code
    if config.out:
        try:
            write_atomic(config.out, text)
        except OSError as e:
            print(f"[main] Cannot write report to {config.out}: {e}", file=sys.stderr)
            return EXIT_USER_ERROR
        logger.info(f"Report written to {config.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
