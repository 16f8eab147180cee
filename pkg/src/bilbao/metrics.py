"""Optimality-gap and action-gap metrics against ground truth.

All metrics are pure functions of (problem oracles, ground truth, current
estimates): they never touch GP state and never consume the problem's
evaluation budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream
from .testbed import BilevelProblem, GroundTruth, phi_star

OPTIMALITY_GAP = "optimality_gap"
ACTION_GAP_FULL = "action_gap_full"
ACTION_GAP_AT_OPTIMUM = "action_gap_at_optimum"
METRIC_NAMES = (OPTIMALITY_GAP, ACTION_GAP_FULL, ACTION_GAP_AT_OPTIMUM)


@dataclass
class MetricSeries:
    """One metric's trajectory for one replication."""

    metric_name: str
    problem_name: str
    replication: int
    indices: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def record(self, evaluation_index: int, value: float):
        if self.indices and evaluation_index <= self.indices[-1]:
            raise ValueError("evaluation indices must be strictly increasing")
        self.indices.append(int(evaluation_index))
        self.values.append(float(value))


def sample_probe_set(
    problem: BilevelProblem, master_seed: int, count: int = 300
) -> np.ndarray:
    """Fixed probe set of upper-level actions, shared by every algorithm
    compared under one master seed."""
    stream = RngStream(master_seed, 0).spawn("probe_set", problem.name)
    return stream.generator.random((count, problem.d_u))


def optimality_gap(
    problem: BilevelProblem, truth: GroundTruth, x_u_rec: np.ndarray
) -> float:
    """|F(rec, true response at rec) - F at the true bilevel optimum|."""
    x_u_rec = np.asarray(x_u_rec, dtype=float).ravel()
    x_l = phi_star(problem, x_u_rec)
    value = float(problem.upper_oracle(np.concatenate([x_u_rec, x_l])[None, :])[0])
    return abs(value - truth.F_star)


def _true_responses(problem: BilevelProblem, X_e: np.ndarray) -> np.ndarray:
    return np.vstack([phi_star(problem, x_u) for x_u in X_e])


def action_gap_full(
    problem: BilevelProblem,
    truth: GroundTruth,
    phi_estimate,
    X_e: np.ndarray,
) -> float:
    """Summed |f(x_u, estimated response) - f(x_u, true response)| over the probes.

    ``phi_estimate`` maps an (n, d_u) batch to an (n, d_l) batch of
    estimated responses.
    """
    X_e = np.atleast_2d(np.asarray(X_e, dtype=float))
    est = np.atleast_2d(phi_estimate(X_e))
    true = _true_responses(problem, X_e)
    f_est = problem.lower_oracle(np.hstack([X_e, est]))
    f_true = problem.lower_oracle(np.hstack([X_e, true]))
    return float(np.sum(np.abs(f_est - f_true)))


def action_gap_at_optimum(
    problem: BilevelProblem, truth: GroundTruth, phi_estimate
) -> float:
    """|F at the true optimum - F with the estimated response at the true optimum|."""
    x_u = np.asarray(truth.x_u_star, dtype=float).ravel()
    est = np.atleast_2d(phi_estimate(x_u[None, :]))[0]
    true = phi_star(problem, x_u)
    F_est = float(problem.upper_oracle(np.concatenate([x_u, est])[None, :])[0])
    F_true = float(problem.upper_oracle(np.concatenate([x_u, true])[None, :])[0])
    return abs(F_true - F_est)
