"""Gap-vs-evaluations figures from bilevel-optimization aggregate CSVs."""

__version__ = "0.1.0"

from .render import EmptySeriesError, PlotSpec, SchemaError, render

__all__ = ["EmptySeriesError", "PlotSpec", "SchemaError", "render"]
