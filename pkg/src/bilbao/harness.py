"""Experiment harness: seeded replications, metric series, CSV outputs.

A JSON config names one problem and a list of algorithm runs; the harness
executes every (run, replication) pair with streams derived from
(master_seed, replication), computes metric series online through the
drivers' observer hook, and writes

* ``results.csv``   one long-format row per (replication, evaluation, metric)
* ``aggregate.csv`` mean and standard error across replications
* ``metadata.json`` resolved config, ground truth, failures, wall times

CSV content is byte-identical across reruns of the same config; wall times
live only in the metadata file.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .algorithms import BenchmarkConfig, BilbaoConfig, run_benchmark, run_bilbao
from .errors import ConfigurationError
from .metrics import (
    ACTION_GAP_AT_OPTIMUM,
    ACTION_GAP_FULL,
    METRIC_NAMES,
    OPTIMALITY_GAP,
    action_gap_at_optimum,
    action_gap_full,
    optimality_gap,
    sample_probe_set,
)
from .response_map import estimate_phi_batch
from .rng import RngStream
from .testbed import (
    GroundTruth,
    _default_resolution,
    make_problem,
    phi_star,
    problem_names,
    true_bilevel_optimum,
)

logger = logging.getLogger(__name__)

ALGORITHMS = ("bilbao_revi", "bilbao_ts", "benchmark", "benchmark2")

CSV_COLUMNS = ["problem", "algorithm", "replication", "evaluation_index", "metric_name", "value"]
AGG_COLUMNS = ["problem", "algorithm", "evaluation_index", "metric_name", "mean", "se", "n_replications"]


@dataclass(frozen=True)
class RunSpec:
    """One algorithm entry of an experiment config."""

    algorithm: str
    bilbao: BilbaoConfig | None = None
    benchmark: BenchmarkConfig | None = None
    stated_total: int | None = None  # optional externally quoted budget, for auditing

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(
                f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}"
            )
        if self.algorithm.startswith("bilbao"):
            if self.bilbao is None:
                raise ConfigurationError(f"{self.algorithm} requires bilbao budgets")
            self.bilbao.validate()
        else:
            if self.benchmark is None:
                raise ConfigurationError(f"{self.algorithm} requires benchmark budgets")
            self.benchmark.validate()

    def total_evaluations(self) -> int:
        cfg = self.bilbao if self.algorithm.startswith("bilbao") else self.benchmark
        return cfg.total_evaluations()


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment end to end."""

    problem: str
    runs: tuple
    master_seed: int = 0
    replications: int = 10
    output_dir: str = "results"
    metrics: tuple = METRIC_NAMES
    metric_phi_restarts: int = 10
    probe_count: int = 300
    ground_truth_resolution: int | None = None
    ground_truth_dir: str | None = None  # default: <output_dir>/ground_truth
    workers: int = 1

    def validate(self):
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        if not self.runs:
            raise ConfigurationError("config must define at least one run")
        if self.problem not in problem_names():
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        for metric in self.metrics:
            if metric not in METRIC_NAMES:
                raise ConfigurationError(f"unknown metric {metric!r}")
        labels = [r.algorithm for r in self.runs]
        if len(set(labels)) != len(labels):
            raise ConfigurationError("duplicate algorithm entries in runs")
        for run in self.runs:
            run.validate()


_BILBAO_KEYS = {
    "init_budget_per_gp",
    "upper_iters",
    "lower_iters",
    "k_interest",
    "lower_disc_size",
    "phi_restarts",
    "acquisition",
    "revi_candidate_budget",
    "map_size",
    "kernel_family",
}
_BENCHMARK_KEYS = {
    "init_upper",
    "init_lower",
    "upper_iters",
    "lower_iters",
    "kernel_family",
    "ei_candidates",
}


def _parse_run(entry: dict) -> RunSpec:
    if not isinstance(entry, dict) or "algorithm" not in entry:
        raise ConfigurationError("each run entry must be an object with an 'algorithm' key")
    algorithm = entry["algorithm"]
    stated_total = entry.get("stated_total")
    if algorithm in ("bilbao_revi", "bilbao_ts"):
        kwargs = {k: v for k, v in entry.items() if k in _BILBAO_KEYS}
        kwargs["acquisition"] = "revits" if algorithm == "bilbao_ts" else "revi"
        return RunSpec(algorithm, bilbao=BilbaoConfig(**kwargs), stated_total=stated_total)
    if algorithm in ("benchmark", "benchmark2"):
        entry = dict(entry)
        if "init_per_gp" in entry:
            entry.setdefault("init_upper", entry["init_per_gp"])
            entry.setdefault("init_lower", entry["init_per_gp"])
        kwargs = {k: v for k, v in entry.items() if k in _BENCHMARK_KEYS}
        return RunSpec(algorithm, benchmark=BenchmarkConfig(**kwargs), stated_total=stated_total)
    raise ConfigurationError(f"unknown algorithm {algorithm!r}")


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a JSON object")
    try:
        runs = tuple(_parse_run(entry) for entry in raw.get("runs", []))
        config = ExperimentConfig(
            problem=raw.get("problem", ""),
            runs=runs,
            master_seed=int(raw.get("master_seed", 0)),
            replications=int(raw.get("replications", 10)),
            output_dir=raw.get("output_dir", "results"),
            metrics=tuple(raw.get("metrics", METRIC_NAMES)),
            metric_phi_restarts=int(raw.get("metric_phi_restarts", 10)),
            probe_count=int(raw.get("probe_count", 300)),
            ground_truth_resolution=raw.get("ground_truth_resolution"),
            ground_truth_dir=raw.get("ground_truth_dir"),
            workers=int(raw.get("workers", 1)),
        )
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    config.validate()
    return config


# -- ground truth cache ------------------------------------------------------


def ground_truth_cache(
    problem_name: str,
    resolution: int | None = None,
    cache_dir: str | Path = "ground_truth_cache",
) -> tuple[GroundTruth, bool]:
    """Load or compute the problem's ground truth; returns (truth, cache_hit).

    The cache stores the resolution it was computed at and is recomputed on
    mismatch.
    """
    problem = make_problem(problem_name)
    res = resolution or _default_resolution(problem.d_u)
    cache_dir = Path(cache_dir)
    path = cache_dir / f"{problem_name}.json"
    if path.exists():
        stored = json.loads(path.read_text())
        if stored.get("resolution") == res:
            logger.info("ground truth cache hit for %s at resolution %d", problem_name, res)
            truth = GroundTruth(
                problem_name, np.asarray(stored["x_u_star"]), stored["F_star"], res
            )
            return truth, True
        logger.info(
            "ground truth cache for %s stored at resolution %s, recomputing at %d",
            problem_name, stored.get("resolution"), res,
        )
    truth = true_bilevel_optimum(problem, res)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(
            {
                "problem": problem_name,
                "resolution": res,
                "x_u_star": truth.x_u_star.tolist(),
                "F_star": truth.F_star,
            },
            indent=2,
        )
    )
    return truth, False


# -- replication jobs --------------------------------------------------------


@dataclass
class _JobResult:
    algorithm: str
    replication: int
    rows: list = field(default_factory=list)
    failed: bool = False
    error: str | None = None
    wall_time: float = 0.0
    evaluations: int = 0


def _execute_job(args) -> _JobResult:
    config, spec, rep, truth, X_e, phi_cache = args
    t0 = time.perf_counter()
    result = _JobResult(spec.algorithm, rep)
    problem = make_problem(config.problem)
    problem._phi_cache.update(phi_cache)
    stream = RngStream(config.master_seed, rep).spawn(spec.algorithm)

    is_bilbao = spec.algorithm.startswith("bilbao")
    want_opt = OPTIMALITY_GAP in config.metrics
    want_full = ACTION_GAP_FULL in config.metrics and is_bilbao
    want_at = ACTION_GAP_AT_OPTIMUM in config.metrics and is_bilbao
    recorded: dict[str, int] = {}

    def add_row(metric: str, index: int, value: float):
        if recorded.get(metric) == index:
            return  # final event can coincide with the last step
        recorded[metric] = index
        result.rows.append(
            (config.problem, spec.algorithm, rep, index, metric, value)
        )

    def observer(event: str, state: dict):
        index = state["evaluations"]
        if want_opt and event in ("init", "upper", "final"):
            add_row(
                OPTIMALITY_GAP,
                index,
                optimality_gap(problem, truth, state["recommendation"]),
            )
        if (want_full or want_at) and event in ("init", "lower"):
            gp_l = state["gp_l"]

            def estimator(X):
                return estimate_phi_batch(gp_l, X, config.metric_phi_restarts)

            if want_full:
                add_row(
                    ACTION_GAP_FULL,
                    index,
                    action_gap_full(problem, truth, estimator, X_e),
                )
            if want_at:
                add_row(
                    ACTION_GAP_AT_OPTIMUM,
                    index,
                    action_gap_at_optimum(problem, truth, estimator),
                )

    try:
        if is_bilbao:
            run_bilbao(problem, spec.bilbao, stream, observer=observer)
        else:
            run_benchmark(problem, spec.benchmark, stream, observer=observer)
        expected = spec.total_evaluations()
        actual = sum(problem.counters)
        if actual != expected:
            raise RuntimeError(
                f"evaluation accounting mismatch: {actual} consumed, {expected} budgeted"
            )
        result.evaluations = actual
    except Exception as exc:  # noqa: BLE001 - a failed replication must not sink the rest
        result.failed = True
        result.error = f"{type(exc).__name__}: {exc}"
        result.rows = []
    result.wall_time = time.perf_counter() - t0
    return result


def _warm_phi_cache(problem, truth: GroundTruth, X_e: np.ndarray) -> dict:
    for x_u in X_e:
        phi_star(problem, x_u)
    phi_star(problem, truth.x_u_star)
    return dict(problem._phi_cache)


@dataclass
class ExperimentResult:
    output_dir: Path
    results_csv: Path
    aggregate_csv: Path
    metadata_json: Path
    failures: list


def run_experiment(
    config: ExperimentConfig | str | Path,
    output_dir: str | Path | None = None,
    workers: int | None = None,
) -> ExperimentResult:
    """Run every (algorithm, replication) pair of a config and write outputs."""
    if not isinstance(config, ExperimentConfig):
        config = load_config(config)
    config.validate()
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_workers = workers or config.workers

    truth, cache_hit = ground_truth_cache(
        config.problem,
        config.ground_truth_resolution,
        config.ground_truth_dir or out / "ground_truth",
    )
    reference = make_problem(config.problem)
    X_e = sample_probe_set(reference, config.master_seed, config.probe_count)
    need_probes = any(r.algorithm.startswith("bilbao") for r in config.runs) and (
        ACTION_GAP_FULL in config.metrics or ACTION_GAP_AT_OPTIMUM in config.metrics
    )
    phi_cache = _warm_phi_cache(reference, truth, X_e if need_probes else X_e[:0])

    jobs = [
        (config, spec, rep, truth, X_e, phi_cache)
        for spec in config.runs
        for rep in range(config.replications)
    ]
    t0 = time.perf_counter()
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(_execute_job, jobs))
    else:
        outcomes = [_execute_job(job) for job in jobs]
    total_wall = time.perf_counter() - t0

    rows = [row for outcome in outcomes for row in outcome.rows]
    results = pd.DataFrame(rows, columns=CSV_COLUMNS)
    results_csv = out / "results.csv"
    results.to_csv(results_csv, index=False)

    grouped = (
        results.groupby(["problem", "algorithm", "evaluation_index", "metric_name"])["value"]
        .agg(
            mean="mean",
            se=lambda v: 0.0 if len(v) < 2 else float(np.std(v, ddof=1) / np.sqrt(len(v))),
            n_replications="count",
        )
        .reset_index()
        .sort_values(["problem", "algorithm", "metric_name", "evaluation_index"])
        [AGG_COLUMNS]
    )
    aggregate_csv = out / "aggregate.csv"
    grouped.to_csv(aggregate_csv, index=False)

    failures = [
        {"algorithm": o.algorithm, "replication": o.replication, "error": o.error}
        for o in outcomes
        if o.failed
    ]
    run_meta = []
    for spec in config.runs:
        entry = {
            "algorithm": spec.algorithm,
            "total_evaluations": spec.total_evaluations(),
            "config": dataclasses.asdict(
                spec.bilbao if spec.algorithm.startswith("bilbao") else spec.benchmark
            ),
        }
        if spec.stated_total is not None and spec.stated_total != spec.total_evaluations():
            entry["budget_note"] = (
                f"configured stated_total {spec.stated_total} differs from the "
                f"accounting-formula total {spec.total_evaluations()}"
            )
        run_meta.append(entry)

    metadata = {
        "package_version": __version__,
        "problem": config.problem,
        "problem_info": {
            "d_u": reference.d_u,
            "d_l": reference.d_l,
            "upper_native_box": np.column_stack(
                [reference.upper_box.lows, reference.upper_box.highs]
            ).tolist(),
            "lower_native_box": np.column_stack(
                [reference.lower_box.lows, reference.lower_box.highs]
            ).tolist(),
        },
        "master_seed": config.master_seed,
        "replications": config.replications,
        "metrics": list(config.metrics),
        "metric_cadence": {
            OPTIMALITY_GAP: "after initialization, after every upper-level step, at termination",
            ACTION_GAP_FULL: "after initialization and after every lower-level GP update",
            ACTION_GAP_AT_OPTIMUM: "after initialization and after every lower-level GP update",
        },
        "metric_phi_restarts": config.metric_phi_restarts,
        "probe_count": config.probe_count,
        "ground_truth": {
            "x_u_star": truth.x_u_star.tolist(),
            "F_star": truth.F_star,
            "resolution": truth.resolution,
            "cache_hit": cache_hit,
        },
        "runs": run_meta,
        "failures": failures,
        "replications_in_aggregate": {
            spec.algorithm: config.replications
            - sum(1 for f in failures if f["algorithm"] == spec.algorithm)
            for spec in config.runs
        },
        "wall_time_seconds": {
            "total": total_wall,
            "per_job": [
                {"algorithm": o.algorithm, "replication": o.replication, "seconds": o.wall_time}
                for o in outcomes
            ],
        },
    }
    metadata_json = out / "metadata.json"
    metadata_json.write_text(json.dumps(metadata, indent=2))

    return ExperimentResult(out, results_csv, aggregate_csv, metadata_json, failures)
