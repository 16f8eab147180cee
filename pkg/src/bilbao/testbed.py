"""Bilevel benchmark problems on the unit box, plus ground-truth oracles.

Every problem exposes two black-box objectives over the joint unit box: an
upper objective F and a lower objective f, both in MAXIMIZATION convention
(native minimization functions are negated).  Inputs are rescaled so all
decision variables live in [0, 1]; each objective keeps its own native box.

Ground truth (the true best-response map and the true bilevel optimum) is
computed by dense grid search refined with a bounded local optimizer, and
never touches the evaluation counters used for budget accounting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError
from .optim import pattern_search_maximize


@dataclass(frozen=True)
class BoxTransform:
    """Affine bijection between the unit box and a native box."""

    lows: np.ndarray
    highs: np.ndarray

    def __post_init__(self):
        lows = np.asarray(self.lows, dtype=float)
        highs = np.asarray(self.highs, dtype=float)
        if np.any(highs <= lows):
            raise ConfigurationError("native box must have positive volume")
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)

    def to_native(self, unit: np.ndarray) -> np.ndarray:
        return self.lows + (self.highs - self.lows) * np.asarray(unit, dtype=float)

    def to_unit(self, native: np.ndarray) -> np.ndarray:
        return (np.asarray(native, dtype=float) - self.lows) / (self.highs - self.lows)


class BilevelProblem:
    """A pair of joint-space objectives with per-call evaluation counters.

    ``evaluate_upper`` / ``evaluate_lower`` count against the budget;
    ``upper_oracle`` / ``lower_oracle`` are the uncounted vectorized access
    used by ground truth and metrics.
    """

    def __init__(
        self,
        name: str,
        d_u: int,
        d_l: int,
        upper_fn: Callable[[np.ndarray], np.ndarray],
        lower_fn: Callable[[np.ndarray], np.ndarray],
        upper_box: BoxTransform,
        lower_box: BoxTransform,
    ):
        self.name = name
        self.d_u = d_u
        self.d_l = d_l
        self._upper_fn = upper_fn
        self._lower_fn = lower_fn
        self.upper_box = upper_box
        self.lower_box = lower_box
        self.upper_count = 0
        self.lower_count = 0
        self._phi_cache: dict = {}

    @property
    def d(self) -> int:
        return self.d_u + self.d_l

    @property
    def counters(self) -> tuple[int, int]:
        return self.upper_count, self.lower_count

    def upper_oracle(self, Z_unit: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z_unit, dtype=float))
        return self._upper_fn(self.upper_box.to_native(Z))

    def lower_oracle(self, Z_unit: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z_unit, dtype=float))
        return self._lower_fn(self.lower_box.to_native(Z))

    def evaluate_upper(self, z_unit: np.ndarray) -> float:
        self.upper_count += 1
        return float(self.upper_oracle(z_unit)[0])

    def evaluate_lower(self, z_unit: np.ndarray) -> float:
        self.lower_count += 1
        return float(self.lower_oracle(z_unit)[0])


@dataclass(frozen=True)
class GroundTruth:
    """Brute-force bilevel optimum for one problem."""

    problem_name: str
    x_u_star: np.ndarray
    F_star: float
    resolution: int


# -- native test functions (minimization forms, vectorized) ----------------


def _branin(X: np.ndarray) -> np.ndarray:
    x1, x2 = X[..., 0], X[..., 1]
    b = 5.1 / (4.0 * math.pi**2)
    c = 5.0 / math.pi
    t = 1.0 / (8.0 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - t) * np.cos(x1) + 10.0


def _six_hump_camel(X: np.ndarray) -> np.ndarray:
    x1, x2 = X[..., 0], X[..., 1]
    return (4.0 - 2.1 * x1**2 + x1**4 / 3.0) * x1**2 + x1 * x2 + (-4.0 + 4.0 * x2**2) * x2**2


def _dixon_price(X: np.ndarray) -> np.ndarray:
    x1, x2 = X[..., 0], X[..., 1]
    return (x1 - 1.0) ** 2 + 2.0 * (2.0 * x2**2 - x1) ** 2


# SMD family with the minimal split: one variable in each of the four blocks
# (xu1, xu2 | xl1, xl2), giving two upper and two lower dimensions.


def _smd_parts(X: np.ndarray):
    return X[..., 0], X[..., 1], X[..., 2], X[..., 3]


def _smd1_upper(X):
    xu1, xu2, xl1, xl2 = _smd_parts(X)
    return xu1**2 + xl1**2 + xu2**2 + (xu2 - np.tan(xl2)) ** 2


def _smd1_lower(X):
    xu1, xu2, xl1, xl2 = _smd_parts(X)
    return xu1**2 + xl1**2 + (xu2 - np.tan(xl2)) ** 2


def _smd2_upper(X):
    xu1, xu2, xl1, xl2 = _smd_parts(X)
    return xu1**2 - xl1**2 + xu2**2 - (xu2 - np.log(xl2)) ** 2


def _smd2_lower(X):
    xu1, xu2, xl1, xl2 = _smd_parts(X)
    return xu1**2 + xl1**2 + (xu2 - np.log(xl2)) ** 2


def _smd3_upper(X):
    xu1, xu2, xl1, xl2 = _smd_parts(X)
    return xu1**2 + xl1**2 + xu2**2 + (xu2**2 - np.tan(xl2)) ** 2


def _smd3_lower(X):
    xu1, xu2, xl1, xl2 = _smd_parts(X)
    rastrigin = 1.0 + xl1**2 - np.cos(2.0 * math.pi * xl1)
    return xu1**2 + rastrigin + (xu2**2 - np.tan(xl2)) ** 2


def _smd4_upper(X):
    xu1, xu2, xl1, xl2 = _smd_parts(X)
    return xu1**2 - xl1**2 + xu2**2 - (np.abs(xu2) - np.log(1.0 + xl2)) ** 2


def _smd4_lower(X):
    xu1, xu2, xl1, xl2 = _smd_parts(X)
    rastrigin = 1.0 + xl1**2 - np.cos(2.0 * math.pi * xl1)
    return xu1**2 + rastrigin + (np.abs(xu2) - np.log(1.0 + xl2)) ** 2


def _negated(fn):
    return lambda X: -fn(X)


# tan/log blow up at the suite's open interval endpoints; the lower bound of
# the last block is pulled in just enough to keep every best response
# representable while bounding the objective range.
_SMD_TAN_BOX = [(-5.0, 10.0), (-5.0, 10.0), (-5.0, 10.0), (-1.5, 1.5)]
_SMD2_BOX = [(-5.0, 10.0), (-5.0, 1.0), (-5.0, 10.0), (0.002, math.e)]
_SMD4_BOX = [(-5.0, 10.0), (-1.0, 1.0), (-5.0, 10.0), (0.0, math.e)]


def _box(bounds) -> BoxTransform:
    arr = np.asarray(bounds, dtype=float)
    return BoxTransform(arr[:, 0], arr[:, 1])


def _two_dim_problem(name, upper_fn, upper_bounds, lower_fn, lower_bounds):
    return BilevelProblem(
        name,
        d_u=1,
        d_l=1,
        upper_fn=_negated(upper_fn),
        lower_fn=_negated(lower_fn),
        upper_box=_box(upper_bounds),
        lower_box=_box(lower_bounds),
    )


def _smd_problem(name, upper_fn, lower_fn, bounds):
    box = _box(bounds)
    return BilevelProblem(
        name,
        d_u=2,
        d_l=2,
        upper_fn=_negated(upper_fn),
        lower_fn=_negated(lower_fn),
        upper_box=box,
        lower_box=box,
    )


def _toy_quadratic():
    def upper(X):
        return -((X[..., 0] - 0.3) ** 2) - (X[..., 1] - 0.3) ** 2

    def lower(X):
        return -((X[..., 1] - X[..., 0]) ** 2)

    unit = _box([(0.0, 1.0), (0.0, 1.0)])
    return BilevelProblem("toy_quadratic", 1, 1, upper, lower, unit, unit)


_BUILDERS: dict[str, Callable[[], BilevelProblem]] = {
    "camel_branin": lambda: _two_dim_problem(
        "camel_branin", _six_hump_camel, [(-3.0, 3.0), (-2.0, 2.0)],
        _branin, [(-5.0, 10.0), (0.0, 15.0)],
    ),
    "dixon_branin": lambda: _two_dim_problem(
        "dixon_branin", _dixon_price, [(-10.0, 10.0), (-10.0, 10.0)],
        _branin, [(-5.0, 10.0), (0.0, 15.0)],
    ),
    "smd1": lambda: _smd_problem("smd1", _smd1_upper, _smd1_lower, _SMD_TAN_BOX),
    "smd2": lambda: _smd_problem("smd2", _smd2_upper, _smd2_lower, _SMD2_BOX),
    "smd3": lambda: _smd_problem("smd3", _smd3_upper, _smd3_lower, _SMD_TAN_BOX),
    "smd4": lambda: _smd_problem("smd4", _smd4_upper, _smd4_lower, _SMD4_BOX),
    "toy_quadratic": _toy_quadratic,
}

PAPER_PROBLEMS = ("camel_branin", "dixon_branin", "smd1", "smd2", "smd3", "smd4")


def problem_names() -> tuple[str, ...]:
    return tuple(_BUILDERS)


def make_problem(name: str) -> BilevelProblem:
    """Build a registered problem; raises ConfigurationError for unknown names."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown problem {name!r}; registered: {', '.join(_BUILDERS)}"
        ) from None
    return builder()


# -- ground truth -----------------------------------------------------------


def _grid_points(d: int, per_dim: int) -> np.ndarray:
    axes = [np.linspace(0.0, 1.0, per_dim) for _ in range(d)]
    if d == 1:
        return axes[0][:, None]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _default_resolution(d: int) -> int:
    return 2000 if d == 1 else 200


def phi_star(
    problem: BilevelProblem, x_u: np.ndarray, resolution: int | None = None
) -> np.ndarray:
    """Ground-truth best response: dense grid plus bounded local refinement.

    Cached per (problem instance, x_u, resolution).
    """
    x_u = np.asarray(x_u, dtype=float).ravel()
    res = resolution or _default_resolution(problem.d_l)
    key = (x_u.tobytes(), res)
    cached = problem._phi_cache.get(key)
    if cached is not None:
        return cached.copy()

    grid = _grid_points(problem.d_l, res)
    Z = np.hstack([np.tile(x_u, (grid.shape[0], 1)), grid])
    values = problem.lower_oracle(Z)
    best = int(np.argmax(values))
    x0, v0 = grid[best], values[best]

    def neg(x_l):
        return -float(problem.lower_oracle(np.concatenate([x_u, x_l])[None, :])[0])

    result = minimize(neg, x0, method="L-BFGS-B", bounds=[(0.0, 1.0)] * problem.d_l)
    x_best = np.clip(result.x, 0.0, 1.0) if -result.fun >= v0 else x0

    problem._phi_cache[key] = x_best
    return x_best.copy()


def true_bilevel_optimum(
    problem: BilevelProblem, resolution: int | None = None
) -> GroundTruth:
    """Nested brute force: dense upper grid, each point resolved via ``phi_star``.

    A coarse joint scan ranks upper candidates, the leaders are re-resolved
    at full lower resolution, and the winner is polished with a pattern
    search whose objective evaluates the exact best-response oracle.
    """
    res_u = resolution or _default_resolution(problem.d_u)
    upper_grid = _grid_points(problem.d_u, res_u)
    coarse = _grid_points(problem.d_l, 512 if problem.d_l == 1 else 64)

    n_l = coarse.shape[0]
    scores = np.empty(upper_grid.shape[0])
    chunk = max(1, int(2e6) // n_l)
    for lo in range(0, upper_grid.shape[0], chunk):
        U = upper_grid[lo : lo + chunk]
        Z = np.hstack(
            [np.repeat(U, n_l, axis=0), np.tile(coarse, (U.shape[0], 1))]
        )
        f_vals = problem.lower_oracle(Z).reshape(U.shape[0], n_l)
        responses = coarse[np.argmax(f_vals, axis=1)]
        scores[lo : lo + chunk] = problem.upper_oracle(np.hstack([U, responses]))

    leaders = np.argsort(scores)[::-1][:10]

    def restricted_value(x_u: np.ndarray) -> float:
        x_l = phi_star(problem, x_u)
        return float(problem.upper_oracle(np.concatenate([x_u, x_l])[None, :])[0])

    best_xu, best_val = None, -np.inf
    for idx in leaders:
        value = restricted_value(upper_grid[idx])
        if value > best_val:
            best_val, best_xu = value, upper_grid[idx]

    def batch_restricted(U: np.ndarray) -> np.ndarray:
        return np.array([restricted_value(u) for u in np.atleast_2d(U)])

    polished, polished_val = pattern_search_maximize(
        batch_restricted, best_xu, max_evals=60, init_step=2.0 / res_u
    )
    if polished_val > best_val:
        best_xu, best_val = polished, polished_val

    return GroundTruth(problem.name, np.asarray(best_xu), float(best_val), res_u)
