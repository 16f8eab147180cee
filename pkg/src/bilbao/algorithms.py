"""End-to-end drivers: the joint-space bilevel optimizer and the nested benchmark.

``run_bilbao`` alternates (i) a Thompson-sampled upper query along the
restricted path of the current response map with (ii) a lower query chosen
by REVI or its Thompson variant, each level backed by a GP over the joint
decision space.  ``run_benchmark`` is the nested baseline: a fresh
lower-level EI run from scratch for every upper-level candidate, with a
single upper GP over upper decisions only.

Both drivers are strictly sequential within a run and deterministic given
(problem, config, stream).  Optional observers receive read-only state
after initialization and after every upper/lower update so the harness can
compute metrics without re-running anything.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import gp as gp_mod
from .acquisition import (
    SliceDiscretization,
    expected_improvement_batch,
    maximize_revi,
    revits_select,
)
from .errors import ConfigurationError
from .gp import Dataset, GPModel, fit
from .optim import pattern_search_maximize
from .response_map import (
    build_map,
    estimate_phi,
    recommend,
    restricted_ts_argmax,
    sample_interest_set,
)
from .rng import RngStream, sobol_points
from .testbed import BilevelProblem

REVI = "revi"
REVITS = "revits"


@dataclass(frozen=True)
class BilbaoConfig:
    """Budgets and discretization sizes for the joint-space driver."""

    init_budget_per_gp: int = 10
    upper_iters: int = 80
    lower_iters: int | None = None  # defaults to upper_iters
    k_interest: int = 10
    lower_disc_size: int = 150
    phi_restarts: int = 30
    acquisition: str = REVI
    revi_candidate_budget: int = 128
    map_size: int | None = None  # defaults to 128 (2D joint) / 256 (4D joint)
    kernel_family: str = gp_mod.MATERN52

    def resolved_lower_iters(self) -> int:
        return self.upper_iters if self.lower_iters is None else self.lower_iters

    def resolved_map_size(self, d: int) -> int:
        if self.map_size is not None:
            return self.map_size
        return 128 if d <= 2 else 256

    def validate(self):
        counts = {
            "init_budget_per_gp": self.init_budget_per_gp,
            "upper_iters": self.upper_iters,
            "lower_iters": self.resolved_lower_iters(),
            "k_interest": self.k_interest,
            "lower_disc_size": self.lower_disc_size,
            "phi_restarts": self.phi_restarts,
            "revi_candidate_budget": self.revi_candidate_budget,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {value}")
        if self.resolved_lower_iters() > self.upper_iters:
            raise ConfigurationError("lower_iters cannot exceed upper_iters")
        if self.acquisition not in (REVI, REVITS):
            raise ConfigurationError(f"unknown acquisition {self.acquisition!r}")

    def total_evaluations(self) -> int:
        return 2 * self.init_budget_per_gp + self.upper_iters + self.resolved_lower_iters()


@dataclass(frozen=True)
class BenchmarkConfig:
    """Budgets for the nested benchmark (per-level inits and iterations)."""

    init_upper: int = 3
    init_lower: int = 3
    upper_iters: int = 20
    lower_iters: int = 4
    kernel_family: str = gp_mod.MATERN52
    ei_candidates: int = 256

    def validate(self):
        for name in ("init_upper", "init_lower", "upper_iters", "lower_iters"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")

    def total_evaluations(self) -> int:
        return (self.init_upper + self.upper_iters) * (
            self.init_lower + self.lower_iters + 1
        )


@dataclass(frozen=True)
class TraceStep:
    """One objective evaluation: who queried what, and the state afterwards."""

    level: str  # "upper" | "lower"
    phase: str  # "init" | "iter"
    point: np.ndarray  # joint query in the unit box
    value: float
    evaluations: int  # cumulative count after this call
    recommendation: np.ndarray | None
    wall_time: float


@dataclass
class Trace:
    """Complete run record; one step per objective evaluation."""

    problem_name: str
    algorithm: str
    steps: list[TraceStep] = field(default_factory=list)
    final_recommendation: np.ndarray | None = None

    @property
    def n_evaluations(self) -> int:
        return len(self.steps)

    def recommendations(self) -> list[tuple[int, np.ndarray]]:
        return [
            (s.evaluations, s.recommendation)
            for s in self.steps
            if s.recommendation is not None
        ]


Observer = Callable[[str, dict], None]


def _notify(observer: Observer | None, event: str, **state):
    if observer is not None:
        observer(event, state)


def _fit_seed(stream: RngStream, *keys) -> int:
    return int(stream.spawn("fit", *keys).generator.integers(2**63))


class _Recorder:
    def __init__(self, trace: Trace, problem: BilevelProblem, t0: float):
        self.trace = trace
        self.problem = problem
        self.t0 = t0

    def record(self, level, phase, point, value, recommendation=None):
        self.trace.steps.append(
            TraceStep(
                level=level,
                phase=phase,
                point=np.asarray(point, dtype=float).copy(),
                value=float(value),
                evaluations=sum(self.problem.counters),
                recommendation=None
                if recommendation is None
                else np.asarray(recommendation, dtype=float).copy(),
                wall_time=time.perf_counter() - self.t0,
            )
        )


def run_bilbao(
    problem: BilevelProblem,
    cfg: BilbaoConfig,
    stream: RngStream,
    observer: Observer | None = None,
) -> Trace:
    """Run the joint-space bilevel optimizer; consumes 2*init + N + N_l evaluations.

    Per iteration: Thompson-sample the restricted upper path to pick the
    upper query, evaluate F at the estimated response, update the upper GP;
    then weight the lower acquisition by a freshly sampled interest set,
    evaluate f at its maximizer, update the lower GP and the response map.
    """
    cfg.validate()
    d_u, d_l, d = problem.d_u, problem.d_l, problem.d
    family = cfg.kernel_family
    n_init = cfg.init_budget_per_gp
    algorithm = "bilbao_ts" if cfg.acquisition == REVITS else "bilbao_revi"
    trace = Trace(problem.name, algorithm)
    rec = _Recorder(trace, problem, time.perf_counter())

    # lower GP on Sobol joint points
    Z_l = sobol_points(d, n_init, stream.spawn("init_lower"))
    y_l = []
    for z in Z_l:
        y_l.append(problem.evaluate_lower(z))
        rec.record("lower", "init", z, y_l[-1])
    data_l = Dataset(Z_l, np.array(y_l))
    gp_l = fit(data_l, family, seed=_fit_seed(stream, "lower", -1))

    base_grid = sobol_points(d_u, cfg.resolved_map_size(d), stream.spawn("map_grid"))
    extra_grid: list[np.ndarray] = []
    response_map = build_map(gp_l, base_grid, cfg.phi_restarts)

    # upper GP: Sobol upper points paired with the initial map's responses
    X_u_init = sobol_points(d_u, n_init, stream.spawn("init_upper"))
    joints, y_u = [], []
    for x_u in X_u_init:
        x_l = estimate_phi(gp_l, x_u, cfg.phi_restarts)
        z = np.concatenate([x_u, x_l])
        joints.append(z)
        y_u.append(problem.evaluate_upper(z))
        rec.record("upper", "init", z, y_u[-1])
    data_u = Dataset(np.array(joints), np.array(y_u))
    gp_u = fit(data_u, family, seed=_fit_seed(stream, "upper", -1))

    recommendation = recommend(gp_u, response_map)
    _notify(
        observer,
        "init",
        gp_u=gp_u,
        gp_l=gp_l,
        response_map=response_map,
        recommendation=recommendation,
        evaluations=sum(problem.counters),
    )

    n_lower = cfg.resolved_lower_iters()
    for n in range(cfg.upper_iters):
        it_stream = stream.spawn("iter", n)

        # upper step: restricted-path Thompson sampling
        x_u = restricted_ts_argmax(gp_u, response_map, it_stream.spawn("upper_ts"))
        x_l_hat = estimate_phi(gp_l, x_u, cfg.phi_restarts)
        z_u = np.concatenate([x_u, x_l_hat])
        value_u = problem.evaluate_upper(z_u)
        data_u = data_u.append(z_u, value_u)
        gp_u = fit(data_u, family, seed=_fit_seed(stream, "upper", n))
        recommendation = recommend(gp_u, response_map)
        # keep every incumbent maximizer in the map grid (no-op while the
        # recommendation is itself a grid member)
        grid_now = base_grid if not extra_grid else np.vstack([base_grid, *extra_grid])
        if not (grid_now == recommendation).all(axis=1).any():
            extra_grid.append(recommendation)
        rec.record("upper", "iter", z_u, value_u, recommendation)
        _notify(
            observer,
            "upper",
            iteration=n,
            gp_u=gp_u,
            gp_l=gp_l,
            response_map=response_map,
            recommendation=recommendation,
            evaluations=sum(problem.counters),
        )

        if n >= n_lower:
            continue

        # lower step: interest-set weighted acquisition
        interest = sample_interest_set(
            gp_u, response_map, cfg.k_interest, it_stream.spawn("interest")
        )
        disc = SliceDiscretization(
            sobol_points(d_l, cfg.lower_disc_size, it_stream.spawn("lower_disc"))
        )
        if cfg.acquisition == REVI:
            z_l = maximize_revi(
                gp_l,
                interest,
                disc,
                cfg.revi_candidate_budget,
                it_stream.spawn("lower_acq"),
            )
        else:
            z_l = revits_select(gp_l, interest, disc, it_stream.spawn("lower_acq"))
        value_l = problem.evaluate_lower(z_l)
        data_l = data_l.append(z_l, value_l)
        gp_l = fit(data_l, family, seed=_fit_seed(stream, "lower", n))

        grid = base_grid if not extra_grid else np.vstack([base_grid, *extra_grid])
        response_map = build_map(gp_l, grid, cfg.phi_restarts)
        rec.record("lower", "iter", z_l, value_l)
        _notify(
            observer,
            "lower",
            iteration=n,
            gp_u=gp_u,
            gp_l=gp_l,
            response_map=response_map,
            recommendation=recommendation,
            evaluations=sum(problem.counters),
        )

    trace.final_recommendation = recommend(gp_u, response_map)
    _notify(
        observer,
        "final",
        gp_u=gp_u,
        gp_l=gp_l,
        response_map=response_map,
        recommendation=trace.final_recommendation,
        evaluations=sum(problem.counters),
    )
    return trace


# -- nested benchmark --------------------------------------------------------


def _maximize_ei(
    gp: GPModel, incumbent: float, d: int, stream: RngStream, n_candidates: int
) -> np.ndarray:
    candidates = sobol_points(d, n_candidates, stream.spawn("sweep"))

    def ei_batch(Z: np.ndarray) -> np.ndarray:
        means, variances = gp.posterior_batch(Z)
        return expected_improvement_batch(means, variances, incumbent)

    values = ei_batch(candidates)
    x0 = candidates[int(np.argmax(values))]
    refined, v_ref = pattern_search_maximize(ei_batch, x0, max_evals=50)
    return refined if v_ref >= values.max() else x0


def _best_observed(points: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, float]:
    idx = int(np.argmax(values))
    return points[idx], float(values[idx])


def _inner_bo(
    problem: BilevelProblem,
    x_u: np.ndarray,
    cfg: BenchmarkConfig,
    stream: RngStream,
    rec: _Recorder,
    phase: str,
) -> tuple[np.ndarray, float]:
    """Fresh lower-level EI run at a fixed upper point; returns best observed."""
    X_l = sobol_points(problem.d_l, cfg.init_lower, stream.spawn("init"))
    values = []
    for x_l in X_l:
        z = np.concatenate([x_u, x_l])
        values.append(problem.evaluate_lower(z))
        rec.record("lower", phase, z, values[-1])
    points = X_l.copy()
    gp_l = fit(Dataset(points, np.array(values)), cfg.kernel_family,
               seed=_fit_seed(stream, "fit", -1))
    for m in range(cfg.lower_iters):
        x_l = _maximize_ei(
            gp_l, max(values), problem.d_l, stream.spawn("acq", m), cfg.ei_candidates
        )
        z = np.concatenate([x_u, x_l])
        value = problem.evaluate_lower(z)
        rec.record("lower", phase, z, value)
        points = np.vstack([points, x_l])
        values.append(value)
        gp_l = fit(Dataset(points, np.array(values)), cfg.kernel_family,
                   seed=_fit_seed(stream, "fit", m))
    return _best_observed(points, np.array(values))


def run_benchmark(
    problem: BilevelProblem,
    cfg: BenchmarkConfig,
    stream: RngStream,
    observer: Observer | None = None,
) -> Trace:
    """Nested baseline: every upper candidate gets a from-scratch lower EI run.

    One upper GP (over upper decisions only) is kept for the whole run; each
    of its observations is F evaluated at the best lower response found by
    the disposable inner run.  Total evaluations:
    (init_upper + upper_iters) * (init_lower + lower_iters + 1).
    """
    cfg.validate()
    trace = Trace(problem.name, "benchmark")
    rec = _Recorder(trace, problem, time.perf_counter())
    d_u = problem.d_u

    X_u = sobol_points(d_u, cfg.init_upper, stream.spawn("outer_init"))
    upper_points, upper_values = [], []

    def run_outer_point(x_u: np.ndarray, inner_stream: RngStream, phase: str):
        x_l_best, _ = _inner_bo(problem, x_u, cfg, inner_stream, rec, phase)
        z = np.concatenate([x_u, x_l_best])
        value = problem.evaluate_upper(z)
        upper_points.append(x_u.copy())
        upper_values.append(value)
        best_x_u, _ = _best_observed(np.array(upper_points), np.array(upper_values))
        rec.record("upper", phase, z, value, best_x_u)
        _notify(
            observer,
            "upper",
            recommendation=best_x_u,
            evaluations=sum(problem.counters),
        )

    for n, x_u in enumerate(X_u):
        run_outer_point(x_u, stream.spawn("inner_init", n), "init")

    gp_u = fit(
        Dataset(np.array(upper_points), np.array(upper_values)),
        cfg.kernel_family,
        seed=_fit_seed(stream, "outer", -1),
    )
    for n in range(cfg.upper_iters):
        x_u = _maximize_ei(
            gp_u, max(upper_values), d_u, stream.spawn("outer_acq", n), cfg.ei_candidates
        )
        run_outer_point(x_u, stream.spawn("inner_iter", n), "iter")
        gp_u = fit(
            Dataset(np.array(upper_points), np.array(upper_values)),
            cfg.kernel_family,
            seed=_fit_seed(stream, "outer", n),
        )

    best_x_u, _ = _best_observed(np.array(upper_points), np.array(upper_values))
    trace.final_recommendation = best_x_u
    _notify(
        observer,
        "final",
        recommendation=best_x_u,
        evaluations=sum(problem.counters),
    )
    return trace
