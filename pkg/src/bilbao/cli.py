"""Command-line entry points.

Exit codes: 0 success, 1 runtime failure (including any failed
replication), 2 configuration error.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .errors import BilbaoError, ConfigurationError
from .harness import ground_truth_cache, run_experiment
from .testbed import _default_resolution, make_problem, problem_names

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


@click.group()
@click.option("--verbose", is_flag=True, help="Enable info-level logging.")
def main(verbose: bool):
    """Bilevel Bayesian-optimization experiment harness."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="JSON experiment config.")
@click.option("--out", "out_dir", default=None, type=click.Path(), help="Override the config's output directory.")
@click.option("--workers", default=None, type=int, help="Concurrent replications.")
def run(config_path: str, out_dir: str | None, workers: int | None):
    """Run every configured algorithm for every replication and write CSVs."""
    try:
        result = run_experiment(config_path, output_dir=out_dir, workers=workers)
    except ConfigurationError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except BilbaoError as exc:
        click.echo(f"runtime error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    if result.failures:
        for failure in result.failures:
            click.echo(
                f"replication failed: {failure['algorithm']} "
                f"rep {failure['replication']}: {failure['error']}",
                err=True,
            )
        click.echo(f"outputs written to {result.output_dir} (with failures)", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(f"outputs written to {result.output_dir}")


@main.command(name="list-problems")
@click.option("--cache-dir", default="ground_truth_cache", type=click.Path(), help="Ground-truth cache location.")
def list_problems(cache_dir: str):
    """List registered problems with dimensions and ground-truth cache status."""
    for name in problem_names():
        problem = make_problem(name)
        path = Path(cache_dir) / f"{name}.json"
        status = f"cached at {path}" if path.exists() else "not cached"
        click.echo(f"{name}  d_u={problem.d_u} d_l={problem.d_l}  ground truth: {status}")


@main.command(name="ground-truth")
@click.option("--problem", "problem_name", required=True)
@click.option("--resolution", default=None, type=int, help="Upper-grid points per dimension.")
@click.option("--cache-dir", default="ground_truth_cache", type=click.Path())
def ground_truth(problem_name: str, resolution: int | None, cache_dir: str):
    """Compute (or load) and persist a problem's ground truth."""
    try:
        truth, hit = ground_truth_cache(problem_name, resolution, cache_dir)
    except ConfigurationError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except OSError as exc:
        click.echo(f"cache write failed: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    res = truth.resolution or _default_resolution(make_problem(problem_name).d_u)
    source = "cache hit" if hit else "computed"
    click.echo(
        f"{problem_name}: F_star={truth.F_star:.6f} at x_u_star={truth.x_u_star.tolist()} "
        f"(resolution {res}, {source})"
    )


if __name__ == "__main__":
    main()
