"""Benchmark harness: paired runs of the two recovery algorithms.

Configs are plain-text ``key=value`` files (configparser syntax) with one
``[bench]`` section and one ``[dataset:<id>]`` section per dataset. For each
dataset the harness selects lambda2 by holdout RMSE over the configured
ladder using the unscreened algorithm, then runs both algorithms at that
lambda2 with identical inputs, so any difference is attributable to the
covariance screening alone. Reports are written as JSON Lines (one
self-describing record per line) plus an aligned text table mirroring the
with/without-augmentation comparison layout; figures are rendered next to
the delimited outputs.

Synthetic datasets are generated fully observed, split, and only then is
missingness injected into the train design, so the holdout rows stay
complete. Derived seeds: generation uses ``seed``, the split ``seed + 1``,
the injection ``seed + 2``.
"""

from __future__ import annotations

import configparser
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .completion import CompletionConfig
from .data import (
    Dataset,
    SyntheticSpec,
    generate_synthetic,
    inject_missingness,
    load_csv,
    split_train_test,
)
from .errors import ConfigError, DataError, PipelineError, SolverError
from .lasso import LassoConfig
from .matrices import empirical_covariance, normalize_columns, save_matrix_text
from .pipeline import (
    PipelineConfig,
    alternate_minimize,
    four_step_recovery,
    modified_four_step_recovery,
)

ALGORITHMS = ("four_step", "modified")

_BENCH_KEYS = {
    "output_dir",
    "lambda1",
    "gamma",
    "lambda2_ladder",
    "epsilon",
    "alpha",
    "max_outer_iters",
    "completion_max_iters",
    "completion_tol",
    "completion_max_rank",
    "lasso_tol",
    "lasso_max_sweeps",
    "support_tol",
    "test_fraction",
    "repeats",
    "render_figures",
}

_DATASET_KEYS = {
    "type",
    "m",
    "n",
    "sparsity",
    "rank",
    "block_corr",
    "block_size",
    "noise_sigma",
    "miss_rate",
    "seed",
    "path",
    "label_column",
    "header",
    "lambda1",
    "lambda2",
    "gamma",
    "epsilon",
    "alpha",
    "test_fraction",
}


@dataclass(frozen=True)
class BenchRow:
    dataset_id: str
    algorithm: str
    lambda1: float
    lambda2: float
    gamma: float
    rmse: float | None
    runtime_seconds: float
    support_size: int
    augmented_size: int
    converged: bool
    error: str = ""


@dataclass(frozen=True)
class PairSummary:
    dataset_id: str
    rmse_improvement_percent: float
    runtime_overhead_percent: float


@dataclass(frozen=True)
class BenchReport:
    rows: list[BenchRow]
    relative_variation: list[PairSummary]


@dataclass(frozen=True)
class DatasetCase:
    """One [dataset:<id>] section, normalized."""

    dataset_id: str
    kind: str
    params: dict
    overrides: dict


@dataclass(frozen=True)
class BenchSettings:
    output_dir: str = "bench_out"
    lambda1: float = 0.5
    gamma: float = 0.5
    lambda2_ladder: tuple[float, ...] = (0.01, 0.1, 1.0)
    epsilon: float = 1e-3
    alpha: float | None = None
    max_outer_iters: int = 50
    completion_max_iters: int = 100
    completion_tol: float = 1e-6
    completion_max_rank: int | None = None
    lasso_tol: float = 1e-7
    lasso_max_sweeps: int = 1000
    support_tol: float = 1e-8
    test_fraction: float = 0.25
    repeats: int = 1
    render_figures: bool = True


@dataclass(frozen=True)
class BenchConfig:
    settings: BenchSettings
    datasets: list[DatasetCase]
    base_dir: Path = field(default_factory=Path)


def compute_rmse(predicted: np.ndarray, actual: np.ndarray) -> float:
    """Root mean squared error, sqrt(mean((predicted - actual)^2))."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape or predicted.ndim != 1 or predicted.size == 0:
        raise ValueError(
            f"prediction shape {predicted.shape} does not match labels {actual.shape}"
        )
    diff = predicted - actual
    return float(np.sqrt(np.mean(diff * diff)))


def _parse_floats(text: str) -> tuple[float, ...]:
    tokens = text.replace(",", " ").split()
    if not tokens:
        raise ConfigError("lambda2_ladder is empty")
    return tuple(float(tok) for tok in tokens)


def load_bench_config(path) -> BenchConfig:
    """Parse and validate a benchmark config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    settings = BenchSettings()
    if parser.has_section("bench"):
        section = parser["bench"]
        unknown = set(section) - _BENCH_KEYS
        if unknown:
            raise ConfigError(f"unknown [bench] keys: {sorted(unknown)}")
        try:
            kwargs = {}
            for key in ("output_dir",):
                if key in section:
                    kwargs[key] = section[key]
            for key in (
                "lambda1",
                "gamma",
                "epsilon",
                "completion_tol",
                "lasso_tol",
                "support_tol",
                "test_fraction",
            ):
                if key in section:
                    kwargs[key] = section.getfloat(key)
            if section.get("alpha"):
                kwargs["alpha"] = section.getfloat("alpha")
            if "lambda2_ladder" in section:
                kwargs["lambda2_ladder"] = _parse_floats(section["lambda2_ladder"])
            for key in (
                "max_outer_iters",
                "completion_max_iters",
                "lasso_max_sweeps",
                "repeats",
            ):
                if key in section:
                    kwargs[key] = section.getint(key)
            if section.get("completion_max_rank"):
                kwargs["completion_max_rank"] = section.getint("completion_max_rank")
            if "render_figures" in section:
                kwargs["render_figures"] = section.getboolean("render_figures")
        except ValueError as exc:
            raise ConfigError(f"[bench]: {exc}") from exc
        settings = BenchSettings(**kwargs)

    datasets = []
    for name in parser.sections():
        if name == "bench":
            continue
        if not name.startswith("dataset:"):
            raise ConfigError(f"unexpected section [{name}]")
        dataset_id = name.split(":", 1)[1].strip()
        if not dataset_id:
            raise ConfigError("dataset section needs an id: [dataset:<id>]")
        section = parser[name]
        unknown = set(section) - _DATASET_KEYS
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
        kind = section.get("type", "").strip().lower()
        if kind not in ("synthetic", "csv"):
            raise ConfigError(f"[{name}]: type must be 'synthetic' or 'csv'")
        try:
            params: dict = {"seed": section.getint("seed", 0)}
            params["miss_rate"] = section.getfloat("miss_rate", 0.0)
            if kind == "synthetic":
                for key in ("m", "n", "sparsity"):
                    if key not in section:
                        raise ConfigError(f"[{name}]: missing required key {key!r}")
                    params[key] = section.getint(key)
                if section.get("rank"):
                    params["rank"] = section.getint("rank")
                params["block_corr"] = section.getfloat("block_corr", 0.0)
                params["block_size"] = section.getint("block_size", 1)
                params["noise_sigma"] = section.getfloat("noise_sigma", 0.0)
            else:
                if "path" not in section or "label_column" not in section:
                    raise ConfigError(f"[{name}]: csv needs path and label_column")
                params["path"] = section["path"]
                params["label_column"] = section["label_column"]
                params["header"] = section.getboolean("header", True)
            overrides = {}
            for key in ("lambda1", "lambda2", "gamma", "epsilon", "alpha", "test_fraction"):
                if section.get(key):
                    overrides[key] = section.getfloat(key)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
        datasets.append(DatasetCase(dataset_id, kind, params, overrides))

    if not datasets:
        raise ConfigError(f"{path}: no [dataset:<id>] sections")
    return BenchConfig(settings=settings, datasets=datasets, base_dir=path.parent)


def build_dataset(case: DatasetCase, cfg: BenchConfig) -> Dataset:
    """Materialize one dataset: generate or load, split, inject missingness."""
    seed = int(case.params["seed"])
    miss_rate = float(case.params["miss_rate"])
    test_fraction = case.overrides.get("test_fraction", cfg.settings.test_fraction)
    if case.kind == "synthetic":
        spec = SyntheticSpec(
            m=case.params["m"],
            n=case.params["n"],
            sparsity=case.params["sparsity"],
            rank=case.params.get("rank"),
            block_corr=case.params["block_corr"],
            block_size=case.params["block_size"],
            miss_rate=0.0,
            noise_sigma=case.params["noise_sigma"],
            seed=seed,
        )
        dataset = generate_synthetic(spec)
    else:
        csv_path = Path(case.params["path"])
        if not csv_path.is_absolute():
            csv_path = cfg.base_dir / csv_path
        dataset = load_csv(
            csv_path, case.params["label_column"], header=case.params["header"]
        )
    dataset = split_train_test(dataset, test_fraction, seed + 1)
    if miss_rate > 0.0:
        dataset = inject_missingness(dataset, miss_rate, seed + 2)
    return dataset


def _pipeline_config(cfg: BenchConfig, case: DatasetCase, lambda2: float) -> PipelineConfig:
    s = cfg.settings
    return PipelineConfig(
        epsilon=case.overrides.get("epsilon", s.epsilon),
        alpha=case.overrides.get("alpha", s.alpha),
        gamma=case.overrides.get("gamma", s.gamma),
        completion_cfg=CompletionConfig(
            lambda1=case.overrides.get("lambda1", s.lambda1),
            max_inner_iters=s.completion_max_iters,
            inner_tol=s.completion_tol,
            max_rank=s.completion_max_rank,
        ),
        lasso_cfg=LassoConfig(
            lambda2=lambda2,
            tol=s.lasso_tol,
            max_sweeps=s.lasso_max_sweeps,
            support_tol=s.support_tol,
        ),
        max_outer_iters=s.max_outer_iters,
    )


def _holdout_rmse(result, dataset: Dataset) -> float:
    return compute_rmse(dataset.test_x @ result.beta.beta, dataset.test_y)


def _select_lambda2(case: DatasetCase, cfg: BenchConfig, dataset: Dataset):
    """Pick lambda2 from the ladder by holdout RMSE of the unscreened algorithm."""
    if "lambda2" in case.overrides:
        return case.overrides["lambda2"], None
    best_lambda2, best_rmse = None, np.inf
    last_error = None
    for lam in cfg.settings.lambda2_ladder:
        pcfg = _pipeline_config(cfg, case, lam)
        try:
            result = four_step_recovery(
                dataset.problem.xhat, dataset.problem.y, pcfg
            )
            rmse = _holdout_rmse(result, dataset)
        except (PipelineError, SolverError, ValueError) as exc:
            last_error = f"lambda2={lam}: {exc}"
            continue
        if rmse < best_rmse:
            best_lambda2, best_rmse = lam, rmse
    return best_lambda2, last_error


def _warmup() -> None:
    """One small untimed run so library startup cost stays out of timings."""
    spec = SyntheticSpec(m=12, n=6, sparsity=2, miss_rate=0.1, noise_sigma=0.01, seed=0)
    dataset = generate_synthetic(spec)
    pcfg = PipelineConfig(
        epsilon=1e-2,
        completion_cfg=CompletionConfig(lambda1=0.1, max_inner_iters=10),
        lasso_cfg=LassoConfig(lambda2=0.5, max_sweeps=50),
        max_outer_iters=3,
    )
    try:
        four_step_recovery(dataset.problem.xhat, dataset.problem.y, pcfg)
    except (PipelineError, SolverError):
        pass


def _timed_cell(
    case: DatasetCase,
    cfg: BenchConfig,
    dataset: Dataset,
    algorithm: str,
    lambda2: float,
) -> BenchRow:
    run = four_step_recovery if algorithm == "four_step" else modified_four_step_recovery
    pcfg = _pipeline_config(cfg, case, lambda2)
    times = []
    result = None
    error = ""
    for _ in range(max(1, cfg.settings.repeats)):
        start = time.perf_counter()
        try:
            result = run(dataset.problem.xhat, dataset.problem.y, pcfg)
        except (PipelineError, SolverError, ValueError) as exc:
            times.append(time.perf_counter() - start)
            error = str(exc)
            result = None
            break
        times.append(time.perf_counter() - start)
    runtime = float(np.median(times))
    if result is None:
        return BenchRow(
            dataset_id=case.dataset_id,
            algorithm=algorithm,
            lambda1=pcfg.completion_cfg.lambda1,
            lambda2=lambda2,
            gamma=pcfg.gamma,
            rmse=None,
            runtime_seconds=runtime,
            support_size=0,
            augmented_size=0,
            converged=False,
            error=error,
        )
    return BenchRow(
        dataset_id=case.dataset_id,
        algorithm=algorithm,
        lambda1=pcfg.completion_cfg.lambda1,
        lambda2=lambda2,
        gamma=pcfg.gamma,
        rmse=_holdout_rmse(result, dataset),
        runtime_seconds=runtime,
        support_size=len(result.support_phase1),
        augmented_size=len(result.support_augmented),
        converged=result.converged,
        error="",
    )


def run_benchmark(config_file) -> BenchReport:
    """Run every dataset cell pair and assemble the report.

    Per-cell failures are recorded on their rows (converged=False plus the
    error string); the harness keeps going. Both algorithms always run at
    the same lambda2 and on the identical dataset object, enforcing the
    paired-run discipline structurally.
    """
    cfg = load_bench_config(config_file)
    _warmup()
    rows: list[BenchRow] = []
    pairs: list[PairSummary] = []
    for case in cfg.datasets:
        try:
            dataset = build_dataset(case, cfg)
        except (DataError, OSError) as exc:
            for algorithm in ALGORITHMS:
                rows.append(
                    BenchRow(
                        dataset_id=case.dataset_id,
                        algorithm=algorithm,
                        lambda1=case.overrides.get("lambda1", cfg.settings.lambda1),
                        lambda2=float("nan"),
                        gamma=case.overrides.get("gamma", cfg.settings.gamma),
                        rmse=None,
                        runtime_seconds=1e-9,
                        support_size=0,
                        augmented_size=0,
                        converged=False,
                        error=f"dataset failed: {exc}",
                    )
                )
            continue

        lambda2, selection_error = _select_lambda2(case, cfg, dataset)
        if lambda2 is None:
            message = "no usable lambda2 on the ladder"
            if selection_error:
                message += f" (last failure: {selection_error})"
            for algorithm in ALGORITHMS:
                rows.append(
                    BenchRow(
                        dataset_id=case.dataset_id,
                        algorithm=algorithm,
                        lambda1=case.overrides.get("lambda1", cfg.settings.lambda1),
                        lambda2=float("nan"),
                        gamma=case.overrides.get("gamma", cfg.settings.gamma),
                        rmse=None,
                        runtime_seconds=1e-9,
                        support_size=0,
                        augmented_size=0,
                        converged=False,
                        error=message,
                    )
                )
            continue

        cells = {
            algorithm: _timed_cell(case, cfg, dataset, algorithm, lambda2)
            for algorithm in ALGORITHMS
        }
        rows.extend(cells.values())
        base, screened = cells["four_step"], cells["modified"]
        if base.rmse is not None and screened.rmse is not None and base.rmse > 0:
            pairs.append(
                PairSummary(
                    dataset_id=case.dataset_id,
                    rmse_improvement_percent=100.0
                    * (base.rmse - screened.rmse)
                    / base.rmse,
                    runtime_overhead_percent=100.0
                    * (screened.runtime_seconds - base.runtime_seconds)
                    / base.runtime_seconds,
                )
            )
    return BenchReport(rows=rows, relative_variation=pairs)


def save_report(report: BenchReport, path) -> None:
    """Write the report as JSON Lines: cell records then pair records."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in report.rows:
            record = {"record": "cell", **row.__dict__}
            fh.write(json.dumps(record) + "\n")
        for pair in report.relative_variation:
            record = {"record": "pair", **pair.__dict__}
            fh.write(json.dumps(record) + "\n")


def load_report(path) -> BenchReport:
    rows, pairs = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                kind = record.pop("record")
                if kind == "cell":
                    rows.append(BenchRow(**record))
                elif kind == "pair":
                    pairs.append(PairSummary(**record))
                else:
                    raise ValueError(f"unknown record type {kind!r}")
            except (ValueError, TypeError, KeyError) as exc:
                raise ConfigError(f"{path}:{line_no}: bad report record: {exc}") from exc
    return BenchReport(rows=rows, relative_variation=pairs)


def _table_records(report: BenchReport) -> list[dict]:
    by_dataset: dict[str, dict[str, BenchRow]] = {}
    for row in report.rows:
        by_dataset.setdefault(row.dataset_id, {})[row.algorithm] = row
    pair_by_id = {p.dataset_id: p for p in report.relative_variation}
    records = []
    for dataset_id, cells in by_dataset.items():
        base = cells.get("four_step")
        screened = cells.get("modified")
        pair = pair_by_id.get(dataset_id)
        if base is None or screened is None or pair is None:
            continue
        records.append(
            {
                "dataset": dataset_id,
                "parameter": "RMSE",
                "with_augmentation": screened.rmse,
                "without_augmentation": base.rmse,
                "relative_variation_percent": pair.rmse_improvement_percent,
            }
        )
        records.append(
            {
                "dataset": dataset_id,
                "parameter": "runtime",
                "with_augmentation": screened.runtime_seconds,
                "without_augmentation": base.runtime_seconds,
                "relative_variation_percent": pair.runtime_overhead_percent,
            }
        )
    return records


def emit_table(report: BenchReport, output_path, render_figure: bool = True) -> list[dict]:
    """Write the aligned comparison table plus its structured twin.

    `output_path` gets the text table; the same stem receives a ``.jsonl``
    with one record per table row and (by default) a ``.png`` chart.
    Returns the table records.
    """
    if not report.rows:
        raise ValueError("refusing to emit a table for an empty report")
    records = _table_records(report)
    if not records:
        raise ValueError("report has no comparable algorithm pairs to tabulate")

    output_path = Path(output_path)
    header = (
        "dataset",
        "parameter",
        "with_augmentation",
        "without_augmentation",
        "relative_variation",
    )
    lines = []
    for rec in records:
        lines.append(
            (
                rec["dataset"],
                rec["parameter"],
                "%.6g" % rec["with_augmentation"],
                "%.6g" % rec["without_augmentation"],
                "%.1f%%" % rec["relative_variation_percent"],
            )
        )
    widths = [
        max(len(header[i]), *(len(line[i]) for line in lines)) for i in range(len(header))
    ]
    with open(output_path, "w", encoding="utf-8") as fh:
        fh.write("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip() + "\n")
        for line in lines:
            fh.write(
                "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip()
                + "\n"
            )

    jsonl_path = output_path.with_suffix(".jsonl")
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")

    if render_figure:
        from .plots import comparison_figure

        comparison_figure(records, output_path.with_suffix(".png"))
    return records


def export_covariance(config_file, dataset_id: str, output_path, render_figure: bool = True):
    """Write the covariance of the normalized phase-1 completed matrix.

    Runs phase 1 for the named dataset (lambda2 fixed by the dataset's
    override, else the first ladder value), normalizes the completed matrix,
    and writes the covariance in the comma-separated text format, with a
    heatmap rendered alongside by default. Returns the covariance matrix.
    """
    cfg = load_bench_config(config_file)
    matches = [case for case in cfg.datasets if case.dataset_id == dataset_id]
    if not matches:
        known = [case.dataset_id for case in cfg.datasets]
        raise ConfigError(f"dataset {dataset_id!r} not in config (have {known})")
    case = matches[0]
    dataset = build_dataset(case, cfg)
    lambda2 = case.overrides.get("lambda2", cfg.settings.lambda2_ladder[0])
    pcfg = _pipeline_config(cfg, case, lambda2)
    phase1 = alternate_minimize(
        dataset.problem.xhat, dataset.problem.y, pcfg, pcfg.epsilon
    )
    normalized, _ = normalize_columns(phase1.completed)
    covariance = empirical_covariance(normalized)
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    save_matrix_text(covariance.entries, output_path)
    if render_figure:
        from .plots import covariance_heatmap

        covariance_heatmap(
            covariance.entries,
            output_path.with_suffix(".png"),
            title=f"empirical covariance: {dataset_id}",
        )
    return covariance
