"""Best-response map estimation and restricted-path Thompson machinery."""

import numpy as np
import pytest

from bilbao.gp import MATERN52, Dataset, GPModel, KernelConfig, fit
from bilbao.response_map import (
    ResponseMap,
    build_map,
    estimate_phi,
    recommend,
    restricted_ts_argmax,
    sample_interest_set,
)
from bilbao.rng import RngStream, sobol_points

from conftest import DensePosteriorOracle, random_fixed_gp


def _quadratic_gp(target: float = 0.5) -> GPModel:
    """GP fit densely on f(x_u, x_l) = -(x_l - target)^2: argmax known."""
    rng = np.random.default_rng(1)
    X = rng.random((200, 2))
    y = -((X[:, 1] - target) ** 2)
    return fit(Dataset(X, y), MATERN52, seed=7)


def test_estimate_phi_flat_objective_returns_feasible_point():
    # a posterior that is constant in x_l: fit on constant observations
    X = np.random.default_rng(0).random((20, 2))
    gp = fit(Dataset(X, np.full(20, 3.25)), MATERN52, seed=0)
    x_l = estimate_phi(gp, np.array([0.3]), restarts=8)
    assert 0.0 <= x_l[0] <= 1.0
    mean, _ = gp.posterior(np.array([0.3, x_l[0]]))
    assert abs(mean - 3.25) < 1e-3


def test_estimate_phi_finds_quadratic_argmax():
    gp = _quadratic_gp(0.5)
    for x_u in (0.1, 0.5, 0.9):
        x_l = estimate_phi(gp, np.array([x_u]), restarts=30)
        assert abs(x_l[0] - 0.5) < 1e-2


def test_estimate_phi_feasible(rng):
    gp = random_fixed_gp(rng, n=8, d=3)  # d_u = 1, d_l = 2
    x_l = estimate_phi(gp, rng.random(1), restarts=12)
    assert x_l.shape == (2,)
    assert np.all(x_l >= 0.0) and np.all(x_l <= 1.0)


def test_build_map_single_point_grid(rng):
    gp = random_fixed_gp(rng, n=6, d=2)
    grid = rng.random((1, 1))
    response_map = build_map(gp, grid, restarts=8)
    assert response_map.size == 1
    assert response_map.responses.shape == (1, 1)


def test_build_map_deterministic(rng):
    gp = random_fixed_gp(rng, n=6, d=2)
    grid = rng.random((5, 1))
    a = build_map(gp, grid, restarts=8)
    b = build_map(gp, grid, restarts=8)
    assert np.array_equal(a.responses, b.responses)
    assert np.array_equal(a.values, b.values)


def test_build_map_values_are_posterior_means(rng):
    gp = random_fixed_gp(rng, n=6, d=2)
    response_map = build_map(gp, rng.random((4, 1)), restarts=8)
    means, _ = gp.posterior_batch(response_map.joint)
    assert np.allclose(means, response_map.values, atol=1e-12)


def test_map_local_optimality_against_probes(rng):
    gp = random_fixed_gp(rng, n=10, d=2, noise=1e-3)
    response_map = build_map(gp, rng.random((6, 1)), restarts=16)
    for i in range(response_map.size):
        x_u = response_map.upper_grid[i]
        probes = rng.random((100, 1))
        joint = np.hstack([np.tile(x_u, (100, 1)), probes])
        probe_means, _ = gp.posterior_batch(joint)
        assert response_map.values[i] >= probe_means.max() - 1e-6


def test_restricted_ts_single_entry(rng):
    gp = random_fixed_gp(rng, n=5, d=2)
    response_map = build_map(gp, rng.random((1, 1)), restarts=4)
    chosen = restricted_ts_argmax(gp, response_map, RngStream(0, 0))
    assert np.array_equal(chosen, response_map.upper_grid[0])


def test_restricted_ts_deterministic(rng):
    gp = random_fixed_gp(rng, n=5, d=2)
    response_map = build_map(gp, rng.random((6, 1)), restarts=4)
    a = restricted_ts_argmax(gp, response_map, RngStream(9, 1))
    b = restricted_ts_argmax(gp, response_map, RngStream(9, 1))
    assert np.array_equal(a, b)


def test_restricted_ts_prefers_dominant_pair():
    kernel = KernelConfig(MATERN52, np.array([0.05, 0.05]), 0.01, 0.0)
    gp = GPModel(Dataset(np.array([[0.5, 0.5]]), np.array([10.0])), kernel, 1e-6)
    response_map = ResponseMap(
        np.array([[0.5], [0.1], [0.9]]),
        np.array([[0.5], [0.1], [0.9]]),
        np.array([10.0, 0.0, 0.0]),
    )
    stream = RngStream(3, 0)
    hits = sum(
        restricted_ts_argmax(gp, response_map, stream)[0] == 0.5 for _ in range(1000)
    )
    assert hits >= 990


def test_sample_interest_set_singleton(rng):
    gp = random_fixed_gp(rng, n=5, d=2)
    response_map = build_map(gp, rng.random((4, 1)), restarts=4)
    interest = sample_interest_set(gp, response_map, k=1, stream=RngStream(2, 0))
    assert interest.k == 1
    assert interest.weights[0] == 1.0


@pytest.mark.parametrize("k", [1, 3, 10])
def test_sample_interest_set_weights_sum_to_one(k, rng):
    gp = random_fixed_gp(rng, n=5, d=2)
    response_map = build_map(gp, rng.random((5, 1)), restarts=4)
    interest = sample_interest_set(gp, response_map, k=k, stream=RngStream(2, 1))
    assert interest.k == k
    assert abs(interest.weights.sum() - 1.0) < 1e-12
    assert np.allclose(interest.weights, 1.0 / k)


def test_interest_points_come_from_map(rng):
    gp = random_fixed_gp(rng, n=5, d=2)
    response_map = build_map(gp, rng.random((5, 1)), restarts=4)
    interest = sample_interest_set(gp, response_map, k=10, stream=RngStream(2, 2))
    for point in interest.upper_points:
        assert any(np.array_equal(point, g) for g in response_map.upper_grid)


def test_recommend_single_entry(rng):
    gp = random_fixed_gp(rng, n=5, d=2)
    response_map = build_map(gp, rng.random((1, 1)), restarts=4)
    assert np.array_equal(recommend(gp, response_map), response_map.upper_grid[0])


def test_recommend_picks_larger_restricted_mean(rng):
    gp = random_fixed_gp(rng, n=6, d=2)
    response_map = build_map(gp, rng.random((2, 1)), restarts=8)
    means, _ = gp.posterior_batch(response_map.joint)
    expected = response_map.upper_grid[int(np.argmax(means))]
    assert np.array_equal(recommend(gp, response_map), expected)


def test_recommend_matches_dense_oracle(rng):
    gp = random_fixed_gp(rng, n=5, d=2)
    response_map = build_map(gp, rng.random((6, 1)), restarts=8)
    oracle = DensePosteriorOracle(gp)
    oracle_means = np.array([oracle.mean(z) for z in response_map.joint])
    package_means, _ = gp.posterior_batch(response_map.joint)
    assert np.allclose(oracle_means, package_means, atol=1e-10)
    chosen = recommend(gp, response_map)
    assert np.array_equal(chosen, response_map.upper_grid[int(np.argmax(oracle_means))])


def test_recommend_output_is_grid_member(rng):
    gp = random_fixed_gp(rng, n=5, d=2)
    grid = rng.random((7, 1))
    response_map = build_map(gp, grid, restarts=4)
    chosen = recommend(gp, response_map)
    assert any(np.array_equal(chosen, g) for g in grid)
