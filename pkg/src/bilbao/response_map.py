"""Estimated lower-level best-response map and restricted-path sampling.

The map pairs a discrete grid of upper-level points with the maximizer of
the lower GP's posterior mean on each slice.  Thompson sampling of the
upper GP restricted to the map's (upper, response) pairs drives both the
upper-level query selection and the interest set that weights the
lower-level acquisition.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .acquisition import InterestSet
from .gp import GPModel
from .optim import multistart_maximize_batched
from .rng import JointSampler, RngStream


@dataclass(frozen=True)
class ResponseMap:
    """Aligned arrays: upper grid points, their responses, posterior means."""

    upper_grid: np.ndarray
    responses: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.atleast_2d(np.asarray(self.upper_grid, dtype=float))
        resp = np.atleast_2d(np.asarray(self.responses, dtype=float))
        vals = np.asarray(self.values, dtype=float).ravel()
        if not (grid.shape[0] == resp.shape[0] == vals.shape[0]):
            raise ValueError("grid, responses, and values must be aligned")
        object.__setattr__(self, "upper_grid", grid)
        object.__setattr__(self, "responses", resp)
        object.__setattr__(self, "values", vals)

    @property
    def size(self) -> int:
        return self.upper_grid.shape[0]

    @property
    def joint(self) -> np.ndarray:
        """(size, d_u + d_l) matrix of (x_u, response) pairs."""
        return np.hstack([self.upper_grid, self.responses])


def _restart_starts(d_l: int, restarts: int) -> np.ndarray:
    # unscrambled Sobol so the map is a pure function of (gp, grid, restarts)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return qmc.Sobol(d=d_l, scramble=False, seed=0).random(restarts)


def _maximize_posterior_slices(
    gp_l: GPModel, upper_points: np.ndarray, restarts: int
) -> tuple[np.ndarray, np.ndarray]:
    """Best lower response per upper point by batched multistart L-BFGS-B.

    All ``restarts`` Sobol starting points are ranked by posterior mean and
    quasi-Newton ascent runs from the leaders of each slice; ascending every
    start costs several times more without changing the returned maximizers.
    """
    upper_points = np.atleast_2d(np.asarray(upper_points, dtype=float))
    G, d_u = upper_points.shape
    d_l = gp_l.d - d_u
    starts = _restart_starts(d_l, restarts)
    ascents = min(restarts, max(3, restarts // 6))

    # rank the Sobol starts per slice with one batched posterior evaluation
    all_joint = np.hstack(
        [np.repeat(upper_points, restarts, axis=0), np.tile(starts, (G, 1))]
    )
    start_means, _ = gp_l.posterior_batch(all_joint)
    by_slice = start_means.reshape(G, restarts)
    top = np.argsort(by_slice, axis=1)[:, -ascents:]  # (G, ascents)

    stacked_starts = starts[top.ravel()]
    groups = np.repeat(np.arange(G), ascents)
    upper_rep = np.repeat(upper_points, ascents, axis=0)

    def fun_grad(Z: np.ndarray):
        joint = np.hstack([upper_rep[: Z.shape[0]], Z])
        means, grads = gp_l.posterior_mean_grad(joint)
        return means, grads[:, d_u:]

    responses, _ = multistart_maximize_batched(fun_grad, stacked_starts, groups, G)
    values, _ = gp_l.posterior_batch(np.hstack([upper_points, responses]))

    # an unconverged ascent must never lose to its own starting point
    best_start = starts[top[:, -1]]
    start_best_vals = by_slice[np.arange(G), top[:, -1]]
    worse = values < start_best_vals
    if np.any(worse):
        responses[worse] = best_start[worse]
        values[worse] = start_best_vals[worse]
    return responses, values


def estimate_phi(gp_l: GPModel, x_u: np.ndarray, restarts: int = 30) -> np.ndarray:
    """Maximizer of the lower posterior mean on the slice at ``x_u``.

    Bounded quasi-Newton ascent from ``restarts`` Sobol starting points;
    always returns a point inside the unit lower box.
    """
    responses, _ = _maximize_posterior_slices(
        gp_l, np.atleast_2d(np.asarray(x_u, dtype=float)), restarts
    )
    return responses[0]


def estimate_phi_batch(
    gp_l: GPModel, upper_points: np.ndarray, restarts: int = 30
) -> np.ndarray:
    """Vectorized :func:`estimate_phi` over many upper points."""
    responses, _ = _maximize_posterior_slices(gp_l, upper_points, restarts)
    return responses


def build_map(gp_l: GPModel, upper_grid: np.ndarray, restarts: int = 30) -> ResponseMap:
    """Estimate the best response at every grid point.

    The caller is responsible for including every incumbent recommendation
    accumulated so far in ``upper_grid``.
    """
    upper_grid = np.atleast_2d(np.asarray(upper_grid, dtype=float))
    if upper_grid.shape[0] < 1:
        raise ValueError("upper grid must be nonempty")
    responses, values = _maximize_posterior_slices(gp_l, upper_grid, restarts)
    return ResponseMap(upper_grid, responses, values)


def restricted_ts_argmax(
    gp_u: GPModel, response_map: ResponseMap, stream: RngStream
) -> np.ndarray:
    """Upper point maximizing one draw of the restricted sample path.

    Samples the upper GP jointly at the map's (upper, response) pairs and
    returns the upper component of the argmax.
    """
    idx, _ = JointSampler(gp_u, response_map.joint).argmax_draw(stream)
    return response_map.upper_grid[idx]


def sample_interest_set(
    gp_u: GPModel, response_map: ResponseMap, k: int, stream: RngStream
) -> InterestSet:
    """k restricted-path Thompson maximizers with uniform weights.

    Repeated draws advance the stream state; duplicate maximizers are kept
    so they act as implicit reweighting.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    sampler = JointSampler(gp_u, response_map.joint)
    picks = [sampler.argmax_draw(stream)[0] for _ in range(k)]
    return InterestSet(response_map.upper_grid[picks])


def recommend(gp_u: GPModel, response_map: ResponseMap) -> np.ndarray:
    """Argmax over the map of the restricted upper posterior mean."""
    means, _ = gp_u.posterior_batch(response_map.joint)
    return response_map.upper_grid[int(np.argmax(means))]
