"""Command-line figure generation from aggregate CSVs.

Exit codes: 0 success, 1 empty series, 2 schema mismatch.
"""

from __future__ import annotations

import logging
import sys

import click

from .render import EmptySeriesError, PlotSpec, SchemaError, render


@click.group()
def main():
    """Figure generation for bilevel-optimization experiment results."""
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")


@main.command()
@click.option("--csv", "csv_paths", multiple=True, required=True, type=click.Path(), help="Aggregate CSV inputs (repeatable).")
@click.option("--metric", required=True, help="Metric name to plot.")
@click.option("--log", "log_scale", is_flag=True, help="Log-scale the y axis.")
@click.option("--out", "output", required=True, type=click.Path(), help="Output image path (or directory for multi-problem inputs).")
@click.option("--label", "labels", multiple=True, help="Relabel a series: algorithm=Label (repeatable).")
def plot(csv_paths, metric, log_scale, output, labels):
    """Render mean lines with +/-1 standard-error bands per algorithm."""
    label_map = {}
    for entry in labels:
        if "=" not in entry:
            click.echo(f"bad --label {entry!r}; expected algorithm=Label", err=True)
            sys.exit(2)
        key, value = entry.split("=", 1)
        label_map[key] = value
    spec = PlotSpec(
        csv_paths=tuple(csv_paths),
        metric=metric,
        output=output,
        log_scale=log_scale,
        labels=label_map,
    )
    try:
        written = render(spec)
    except SchemaError as exc:
        click.echo(f"schema error: {exc}", err=True)
        sys.exit(2)
    except EmptySeriesError as exc:
        click.echo(f"empty series: {exc}", err=True)
        sys.exit(1)
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
