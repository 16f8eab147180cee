"""Render gap-vs-evaluations curves with shaded standard-error bands.

Input CSVs follow the experiment harness's aggregate schema (long format,
one row per problem/algorithm/evaluation/metric with mean and se columns).
One figure is produced per problem found in the inputs: a mean line per
algorithm with a +/-1 SE band, evaluations on the x axis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["problem", "algorithm", "evaluation_index", "metric_name", "mean", "se"]
LOG_FLOOR = 1e-12

# fixed colors so the same algorithm looks the same across figures
ALGORITHM_COLORS = {
    "bilbao_revi": "tab:blue",
    "bilbao_ts": "tab:orange",
    "benchmark": "tab:green",
    "benchmark2": "tab:red",
}
_FALLBACK_COLORS = ("tab:purple", "tab:brown", "tab:pink", "tab:gray", "tab:olive")

METRIC_LABELS = {
    "optimality_gap": "optimality gap",
    "action_gap_full": "action gap",
    "action_gap_at_optimum": "action gap at optimum",
}


class SchemaError(Exception):
    """Input CSV does not conform to the aggregate schema."""


class EmptySeriesError(Exception):
    """No rows remain for the requested metric."""


@dataclass(frozen=True)
class PlotSpec:
    """What to plot and where to write it."""

    csv_paths: tuple
    metric: str
    output: str
    log_scale: bool = False
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.csv_paths:
            raise SchemaError("at least one input CSV is required")


def _load(spec: PlotSpec) -> pd.DataFrame:
    frames = []
    for path in spec.csv_paths:
        path = Path(path)
        if not path.exists():
            raise SchemaError(f"input CSV not found: {path}")
        frame = pd.read_csv(path)
        missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
        if missing:
            raise SchemaError(f"{path} is missing columns: {', '.join(missing)}")
        if spec.metric not in set(frame.metric_name):
            raise SchemaError(f"{path} has no rows for metric {spec.metric!r}")
        frames.append(frame[REQUIRED_COLUMNS])
    data = pd.concat(frames, ignore_index=True)
    data = data[data.metric_name == spec.metric]
    if data.empty:
        raise EmptySeriesError(f"no rows for metric {spec.metric!r}")
    return data


def _color_for(algorithm: str, seen: list) -> str:
    if algorithm in ALGORITHM_COLORS:
        return ALGORITHM_COLORS[algorithm]
    if algorithm not in seen:
        seen.append(algorithm)
    return _FALLBACK_COLORS[seen.index(algorithm) % len(_FALLBACK_COLORS)]


def _render_problem(spec: PlotSpec, problem: str, data: pd.DataFrame, out_path: Path):
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    unknown: list = []
    for algorithm, series in data.groupby("algorithm", sort=True):
        series = series.sort_values("evaluation_index")
        x = series.evaluation_index.to_numpy()
        mean = series["mean"].to_numpy(dtype=float)
        se = series["se"].to_numpy(dtype=float)
        if spec.log_scale:
            clipped = (mean <= LOG_FLOOR).sum()
            if clipped:
                logger.warning(
                    "%s/%s: clamped %d nonpositive values to %.0e for log scale",
                    problem, algorithm, clipped, LOG_FLOOR,
                )
            mean = mean.clip(min=LOG_FLOOR)
        color = _color_for(str(algorithm), unknown)
        label = spec.labels.get(str(algorithm), str(algorithm))
        ax.plot(x, mean, label=label, color=color)
        lower = mean - se
        if spec.log_scale:
            lower = lower.clip(min=LOG_FLOOR)
        ax.fill_between(x, lower, mean + se, color=color, alpha=0.25, linewidth=0)
    if spec.log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("function evaluations")
    ax.set_ylabel(METRIC_LABELS.get(spec.metric, spec.metric))
    ax.set_title(problem)
    ax.legend()
    fig.tight_layout()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": "plotkit"}):
        fig.savefig(out_path, metadata=_stable_metadata(out_path.suffix))
    plt.close(fig)


def _stable_metadata(suffix: str):
    # keep outputs byte-stable: no creation dates
    if suffix == ".png":
        return {"Software": "plotkit"}
    if suffix == ".svg":
        return {"Date": None}
    return None


def render(spec: PlotSpec) -> list:
    """Write one figure per problem present in the inputs; returns the paths.

    With a single problem the output path is used verbatim; with several,
    it is treated as a directory and files are named by problem and metric.
    """
    data = _load(spec)
    problems = sorted(data.problem.unique())
    out = Path(spec.output)
    written = []
    if len(problems) == 1:
        target = out if out.suffix else out / f"{problems[0]}_{spec.metric}.png"
        _render_problem(spec, problems[0], data[data.problem == problems[0]], target)
        written.append(target)
    else:
        ext = out.suffix.lstrip(".") or "png"
        directory = out.parent if out.suffix else out
        for problem in problems:
            target = directory / f"{problem}_{spec.metric}.{ext}"
            _render_problem(spec, problem, data[data.problem == problem], target)
            written.append(target)
    return written
