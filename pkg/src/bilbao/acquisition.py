"""Acquisition functions: EI, fixed-task knowledge gradient, REVI, REVITS.

The knowledge-gradient inner expectation E[max_i (a_i + b_i Z)] is computed
exactly with the sorted-slopes epigraph algorithm rather than by Monte
Carlo, which keeps the acquisition deterministic and makes oracle testing
sharp.  REVI averages fixed-task knowledge gradients over an interest set
of upper-level points; REVITS replaces the expectation with a single joint
Thompson draw over the interest-set x lower-discretization grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import DegenerateCandidateError
from .gp import GPModel
from .optim import pattern_search_maximize
from .rng import JointSampler, RngStream, sobol_points

try:  # JIT keeps the epigraph scan off the Python interpreter
    from numba import njit
except ImportError:  # pragma: no cover - plain-Python fallback
    def njit(*args, **kwargs):
        def decorate(fn):
            return fn

        return decorate

logger = logging.getLogger(__name__)

KG_CLAMP = 1e-14
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_INV_SQRT_2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class InterestSet:
    """Upper-level points that weight the lower-level acquisition.

    Duplicates are allowed and act as implicit reweighting.
    """

    upper_points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.upper_points, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("interest set must contain at least one point")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != pts.shape[0]:
            raise ValueError("weights and upper_points must have equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "upper_points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return self.upper_points.shape[0]


@dataclass(frozen=True)
class SliceDiscretization:
    """Lower-level points discretizing each fixed-task slice."""

    lower_points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.lower_points, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("slice discretization must be nonempty")
        if pts.min() < -1e-9 or pts.max() > 1 + 1e-9:
            raise ValueError("slice points must lie in the unit box")
        object.__setattr__(self, "lower_points", np.clip(pts, 0.0, 1.0))

    @property
    def m(self) -> int:
        return self.lower_points.shape[0]


def expected_improvement(mean: float, std: float, incumbent: float) -> float:
    """E[max(Y - incumbent, 0)] for Y ~ Normal(mean, std^2)."""
    if std < 0:
        raise ValueError("std must be nonnegative")
    if std == 0.0:
        return max(mean - incumbent, 0.0)
    z = (mean - incumbent) / std
    return max(float((mean - incumbent) * norm.cdf(z) + std * norm.pdf(z)), 0.0)


def expected_improvement_batch(
    means: np.ndarray, variances: np.ndarray, incumbent: float
) -> np.ndarray:
    stds = np.sqrt(np.maximum(variances, 0.0))
    imp = means - incumbent
    safe = np.maximum(stds, 1e-300)
    z = imp / safe
    ei = imp * norm.cdf(z) + safe * norm.pdf(z)
    out = np.where(stds > 0, ei, np.maximum(imp, 0.0))
    return np.maximum(out, 0.0)


@njit(cache=True)
def _emax_affine_core(a: np.ndarray, b: np.ndarray) -> float:
    """E[max_i (a_i + b_i Z)]: sort by slope, build the upper envelope,
    integrate each surviving affine piece against the normal density."""
    n = a.size
    if n == 1:
        return a[0]
    order = np.argsort(b, kind="mergesort")

    # among equal slopes only the largest intercept can touch the envelope
    a2 = np.empty(n)
    b2 = np.empty(n)
    m = 0
    i = 0
    while i < n:
        slope = b[order[i]]
        best = a[order[i]]
        j = i + 1
        while j < n and b[order[j]] == slope:
            if a[order[j]] > best:
                best = a[order[j]]
            j += 1
        a2[m] = best
        b2[m] = slope
        m += 1
        i = j
    if m == 1:
        return a2[0]

    idx = np.empty(m, np.int64)
    brk = np.empty(m)
    top = 0
    nb = 0
    idx[0] = 0
    for j in range(1, m):
        while True:
            i0 = idx[top]
            z = (a2[i0] - a2[j]) / (b2[j] - b2[i0])
            if nb > 0 and z <= brk[nb - 1]:
                top -= 1
                nb -= 1
            else:
                top += 1
                idx[top] = j
                brk[nb] = z
                nb += 1
                break

    total = 0.0
    prev_cdf = 0.0
    prev_pdf = 0.0
    for t in range(top + 1):
        if t < nb:
            z = brk[t]
            cdf = 0.5 * (1.0 + math.erf(z * _INV_SQRT_2))
            pdf = math.exp(-0.5 * z * z) * _INV_SQRT_2PI
        else:
            cdf = 1.0
            pdf = 0.0
        total += a2[idx[t]] * (cdf - prev_cdf) + b2[idx[t]] * (prev_pdf - pdf)
        prev_cdf = cdf
        prev_pdf = pdf
    return total


@njit(cache=True)
def _kg_terms_core(mu: np.ndarray, sigma_rows: np.ndarray) -> np.ndarray:
    """KG terms for one slice block: rows of ``sigma_rows`` are candidates."""
    c = sigma_rows.shape[0]
    base = mu.max()
    out = np.zeros(c)
    for i in range(c):
        row = sigma_rows[i]
        if row.max() - row.min() > KG_CLAMP:  # constant rows contribute zero
            out[i] = _emax_affine_core(mu, row) - base
    return out


def expected_max_affine(intercepts: np.ndarray, slopes: np.ndarray) -> float:
    """Exact E[max_i (a_i + b_i Z)] for standard normal Z.

    Sorted-slopes upper-envelope construction: identical slopes keep only
    the largest intercept, dominated lines are dropped while scanning, and
    the expectation integrates the surviving affine pieces between
    breakpoints in closed form.
    """
    a = np.ascontiguousarray(np.asarray(intercepts, dtype=float).ravel())
    b = np.ascontiguousarray(np.asarray(slopes, dtype=float).ravel())
    if a.size != b.size or a.size == 0:
        raise ValueError("intercepts and slopes must be nonempty and equal length")
    return float(_emax_affine_core(a, b))


def _joint_slice(x_u: np.ndarray, lower_points: np.ndarray) -> np.ndarray:
    x_u = np.asarray(x_u, dtype=float).ravel()
    return np.hstack(
        [np.tile(x_u, (lower_points.shape[0], 1)), lower_points]
    )


def kg_fixed_task(
    gp: GPModel,
    x_u_fixed: np.ndarray,
    candidate: np.ndarray,
    disc: SliceDiscretization,
) -> float:
    """Discrete knowledge gradient of ``candidate`` for one fixed upper point.

    Expected one-step increase of the posterior-mean maximum over the slice
    {(x_u_fixed, x_l) : x_l in the discretization}; exact via the epigraph
    algorithm, clamped to zero below round-off.
    """
    slice_points = _joint_slice(x_u_fixed, disc.lower_points)
    try:
        mu, sigma_tilde = gp.fantasy_coefficients(slice_points, candidate)
    except DegenerateCandidateError:
        logger.warning("degenerate KG candidate (zero variance, zero noise): returning 0")
        return 0.0
    value = expected_max_affine(mu, sigma_tilde) - float(np.max(mu))
    return value if value > KG_CLAMP else 0.0


def revi(
    gp: GPModel,
    candidate: np.ndarray,
    interest: InterestSet,
    disc: SliceDiscretization,
) -> float:
    """Weighted average of fixed-task knowledge gradients over the interest set."""
    return float(
        revi_batch(gp, np.atleast_2d(np.asarray(candidate, dtype=float)), interest, disc)[0]
    )


def revi_batch(
    gp: GPModel,
    candidates: np.ndarray,
    interest: InterestSet,
    disc: SliceDiscretization,
) -> np.ndarray:
    """REVI values for a batch of joint candidates (vectorized fantasy algebra).

    Duplicate interest points (common when Thompson sampling concentrates)
    collapse to one KG block with summed weight; the result is unchanged.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    m = disc.m
    uniques, inverse = np.unique(interest.upper_points, axis=0, return_inverse=True)
    weights = np.zeros(uniques.shape[0])
    np.add.at(weights, inverse.ravel(), interest.weights)

    slice_points = np.vstack([_joint_slice(x_u, disc.lower_points) for x_u in uniques])
    try:
        mu, sigma = gp.fantasy_coefficients_many(slice_points, candidates)
    except DegenerateCandidateError:
        logger.warning("degenerate KG candidate (zero variance, zero noise): returning 0")
        return np.zeros(candidates.shape[0])

    values = np.zeros(candidates.shape[0])
    for i, w in enumerate(weights):
        block = slice(i * m, (i + 1) * m)
        terms = _kg_terms_core(
            np.ascontiguousarray(mu[block]), np.ascontiguousarray(sigma[block].T)
        )
        terms[terms <= KG_CLAMP] = 0.0
        values += w * terms
    return values


def maximize_revi(
    gp: GPModel,
    interest: InterestSet,
    disc: SliceDiscretization,
    budget: int,
    stream: RngStream,
    aug_lower_count: int = 8,
    refine_evals: int = 50,
) -> np.ndarray:
    """Pick the joint point with the largest REVI value.

    Sweeps ``budget`` Sobol joint candidates plus an interest-set
    augmentation grid, then polishes the best candidate with a bounded
    coordinate pattern search.  The selected point is free to leave the
    interest set's upper slices.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    d_u = interest.upper_points.shape[1]
    d_l = disc.lower_points.shape[1]
    d = gp.d
    if d != d_u + d_l:
        raise ValueError("interest/disc dimensions do not match the GP")

    cands = [sobol_points(d, budget, stream.spawn("sweep"))]
    if aug_lower_count > 0:
        lower_aug = sobol_points(d_l, aug_lower_count, stream.spawn("aug"))
        cands.append(
            np.vstack([_joint_slice(x_u, lower_aug) for x_u in interest.upper_points])
        )
    candidates = np.vstack(cands)

    values = revi_batch(gp, candidates, interest, disc)
    best = int(np.argmax(values))
    x0, v0 = candidates[best], values[best]

    refined, v_ref = pattern_search_maximize(
        lambda Z: revi_batch(gp, Z, interest, disc), x0, max_evals=refine_evals
    )
    return refined if v_ref >= v0 else x0


def revits_select(
    gp: GPModel,
    interest: InterestSet,
    lower_disc: SliceDiscretization,
    stream: RngStream,
) -> np.ndarray:
    """Thompson alternative to REVI: argmax of one joint posterior draw.

    The candidate grid is the cross product of the interest set's upper
    points with the lower discretization, so the chosen query always sits
    on an interest slice.
    """
    grid = np.vstack(
        [_joint_slice(x_u, lower_disc.lower_points) for x_u in interest.upper_points]
    )
    idx, _ = JointSampler(gp, grid).argmax_draw(stream)
    return grid[idx]
