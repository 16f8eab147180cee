"""Bilevel Bayesian optimization with joint-space Gaussian processes."""

import os as _os

__version__ = "0.1.0"

from .acquisition import (
    InterestSet,
    SliceDiscretization,
    expected_improvement,
    kg_fixed_task,
    maximize_revi,
    revi,
    revits_select,
)
from .algorithms import BenchmarkConfig, BilbaoConfig, Trace, TraceStep, run_benchmark, run_bilbao
from .errors import (
    BilbaoError,
    ConfigurationError,
    DataError,
    DegenerateCandidateError,
    NumericalError,
)
from .gp import Dataset, GPModel, KernelConfig, fit
from .metrics import action_gap_at_optimum, action_gap_full, optimality_gap, sample_probe_set
from .response_map import (
    ResponseMap,
    build_map,
    estimate_phi,
    recommend,
    restricted_ts_argmax,
    sample_interest_set,
)
from .rng import RngStream, mvn_sample, sobol_points, thompson_argmax
from .testbed import BilevelProblem, GroundTruth, make_problem, phi_star, true_bilevel_optimum

__all__ = [
    "BenchmarkConfig",
    "BilbaoConfig",
    "BilbaoError",
    "BilevelProblem",
    "ConfigurationError",
    "DataError",
    "Dataset",
    "DegenerateCandidateError",
    "GPModel",
    "GroundTruth",
    "InterestSet",
    "KernelConfig",
    "NumericalError",
    "ResponseMap",
    "RngStream",
    "SliceDiscretization",
    "Trace",
    "TraceStep",
    "action_gap_at_optimum",
    "action_gap_full",
    "build_map",
    "estimate_phi",
    "expected_improvement",
    "fit",
    "kg_fixed_task",
    "make_problem",
    "maximize_revi",
    "mvn_sample",
    "optimality_gap",
    "phi_star",
    "recommend",
    "restricted_ts_argmax",
    "revi",
    "revits_select",
    "run_benchmark",
    "run_bilbao",
    "sample_interest_set",
    "sample_probe_set",
    "sobol_points",
    "thompson_argmax",
    "true_bilevel_optimum",
]

# The workload is thousands of small factorizations; BLAS thread pools spin
# far longer than they compute on quota-limited CPUs.  Pin to one thread
# unless the caller overrides via BILBAO_BLAS_THREADS.  Applied after the
# submodule imports above so every loaded BLAS is covered.
try:
    from threadpoolctl import threadpool_limits as _threadpool_limits

    _blas_limit = _threadpool_limits(limits=int(_os.environ.get("BILBAO_BLAS_THREADS", "1")))
except Exception:  # pragma: no cover - threadpoolctl is optional
    _blas_limit = None
