"""Derivative-free and gradient-based maximizers over the unit box.

Two workhorses shared by the response map, the acquisition optimizers, and
the benchmark driver:

* :func:`multistart_maximize_batched` stacks many independent box-constrained
  subproblems into a single L-BFGS-B call (the objective is separable, so the
  joint run optimizes every subproblem at once at a fraction of the Python
  overhead of per-start calls).
* :func:`pattern_search_maximize` is a deterministic coordinate pattern
  search used to polish the best candidate of a sweep when no gradient is
  available.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.optimize import minimize

BatchFun = Callable[[np.ndarray], np.ndarray]
BatchFunGrad = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def multistart_maximize_batched(
    fun_grad: BatchFunGrad,
    starts: np.ndarray,
    groups: np.ndarray,
    n_groups: int,
    maxiter: int = 120,
) -> tuple[np.ndarray, np.ndarray]:
    """Maximize many independent subproblems in one L-BFGS-B run.

    Parameters
    ----------
    fun_grad:
        Maps an (p, dim) batch to (values (p,), gradients (p, dim)).
    starts:
        (p, dim) start points in the unit box.
    groups:
        (p,) integer labels; the best final point per label is returned.
    n_groups:
        Number of labels; labels must cover ``range(n_groups)``.

    Returns
    -------
    (n_groups, dim) best points and (n_groups,) best values.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    p, dim = starts.shape

    def negated(flat: np.ndarray):
        Z = flat.reshape(p, dim)
        values, grads = fun_grad(Z)
        return -float(np.sum(values)), -grads.ravel()

    result = minimize(
        negated,
        starts.ravel(),
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, 1.0)] * (p * dim),
        options={"maxiter": maxiter, "ftol": 1e-12, "gtol": 1e-9},
    )
    Z = np.clip(result.x.reshape(p, dim), 0.0, 1.0)
    values, _ = fun_grad(Z)

    best_points = np.empty((n_groups, dim))
    best_values = np.full(n_groups, -np.inf)
    for g in range(n_groups):
        member = np.flatnonzero(groups == g)
        idx = member[int(np.argmax(values[member]))]
        best_points[g] = Z[idx]
        best_values[g] = values[idx]
    return best_points, best_values


def pattern_search_maximize(
    fun: BatchFun,
    x0: np.ndarray,
    max_evals: int = 50,
    init_step: float = 0.1,
    min_step: float = 1e-6,
) -> tuple[np.ndarray, float]:
    """Coordinate pattern search in the unit box, maximizing ``fun``.

    ``fun`` takes an (p, dim) batch and returns (p,) values; every batch row
    counts against ``max_evals``.  Deterministic: probes each coordinate in
    order, moves to the best improving probe, halves the step on failure.
    """
    x = np.clip(np.asarray(x0, dtype=float).copy(), 0.0, 1.0)
    value = float(fun(x[None, :])[0])
    dim = x.size
    step = init_step
    evals = 1
    while evals < max_evals and step >= min_step:
        probes = []
        for j in range(dim):
            for sign in (1.0, -1.0):
                probe = x.copy()
                probe[j] = min(max(probe[j] + sign * step, 0.0), 1.0)
                probes.append(probe)
        probes = np.unique(np.array(probes), axis=0)
        take = min(len(probes), max_evals - evals)
        probes = probes[:take]
        if len(probes) == 0:
            break
        values = fun(probes)
        evals += len(probes)
        best = int(np.argmax(values))
        if values[best] > value:
            x = probes[best]
            value = float(values[best])
        else:
            step *= 0.5
    return x, value
