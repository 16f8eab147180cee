"""Optimality and action gaps against the brute-force ground truth."""

import numpy as np
import pytest

from bilbao.metrics import (
    action_gap_at_optimum,
    action_gap_full,
    optimality_gap,
    sample_probe_set,
)
from bilbao.testbed import make_problem, phi_star, true_bilevel_optimum


@pytest.fixture(scope="module")
def toy():
    problem = make_problem("toy_quadratic")
    return problem, true_bilevel_optimum(problem)


@pytest.fixture(scope="module")
def camel():
    problem = make_problem("camel_branin")
    return problem, true_bilevel_optimum(problem)


def _true_phi(problem):
    def estimator(X):
        return np.vstack([phi_star(problem, x_u) for x_u in np.atleast_2d(X)])

    return estimator


# -- optimality gap -------------------------------------------------------------


def test_gap_zero_at_optimum(toy):
    problem, truth = toy
    assert optimality_gap(problem, truth, truth.x_u_star) < 1e-6


def test_gap_analytic_toy_value(toy):
    # F(0.5, phi*(0.5)) = -(0.2)^2 - (0.2)^2 = -0.08 and F* = 0, computed by
    # the analytic oracle rather than assumed
    problem, truth = toy
    x_l = phi_star(problem, np.array([0.5]))
    expected = abs(
        float(problem.upper_oracle(np.array([[0.5, x_l[0]]]))[0]) - truth.F_star
    )
    assert abs(expected - 0.08) < 1e-4
    assert abs(optimality_gap(problem, truth, np.array([0.5])) - expected) < 1e-12


def test_gap_nonnegative_on_random_recommendations(toy, rng):
    problem, truth = toy
    for _ in range(100):
        assert optimality_gap(problem, truth, rng.random(1)) >= 0.0


def test_gap_does_not_touch_counters(toy):
    problem, truth = toy
    before = problem.counters
    optimality_gap(problem, truth, np.array([0.77]))
    assert problem.counters == before


# -- full-domain action gap -------------------------------------------------------


def test_action_gap_zero_for_true_map(toy):
    problem, truth = toy
    X_e = sample_probe_set(problem, master_seed=4, count=300)
    gap = action_gap_full(problem, truth, _true_phi(problem), X_e)
    assert gap < 300 * 1e-6


def test_action_gap_single_probe_matches_direct_evaluation(camel):
    problem, truth = camel
    x_u = np.array([0.37])
    estimator = lambda X: np.full((len(np.atleast_2d(X)), 1), 0.2)
    gap = action_gap_full(problem, truth, estimator, x_u[None, :])
    f_est = problem.lower_oracle(np.array([[0.37, 0.2]]))[0]
    x_l_true = phi_star(problem, x_u)
    f_true = problem.lower_oracle(np.array([[0.37, x_l_true[0]]]))[0]
    assert abs(gap - abs(f_est - f_true)) < 1e-12


def test_action_gap_constant_estimate_matches_summation_oracle(camel, rng):
    problem, truth = camel
    X_e = rng.random((40, 1))
    estimator = lambda X: np.full((len(np.atleast_2d(X)), 1), 0.5)
    gap = action_gap_full(problem, truth, estimator, X_e)
    total = 0.0
    for x_u in X_e:
        f_est = problem.lower_oracle(np.array([[x_u[0], 0.5]]))[0]
        x_l = phi_star(problem, x_u)
        f_true = problem.lower_oracle(np.array([[x_u[0], x_l[0]]]))[0]
        total += abs(f_est - f_true)
    assert abs(gap - total) < 1e-8


# -- at-optimum action gap ---------------------------------------------------------


def test_action_gap_at_optimum_zero_for_true_response(toy):
    problem, truth = toy
    assert action_gap_at_optimum(problem, truth, _true_phi(problem)) < 1e-9


def test_action_gap_at_optimum_nonnegative(camel, rng):
    problem, truth = camel
    for _ in range(20):
        shift = rng.random()
        estimator = lambda X, s=shift: np.full((len(np.atleast_2d(X)), 1), s)
        assert action_gap_at_optimum(problem, truth, estimator) >= 0.0


def test_action_gap_at_optimum_matches_direct_evaluation(toy):
    problem, truth = toy
    estimator = lambda X: np.full((len(np.atleast_2d(X)), 1), 0.9)
    gap = action_gap_at_optimum(problem, truth, estimator)
    x_u = truth.x_u_star
    F_est = problem.upper_oracle(np.concatenate([x_u, [0.9]])[None, :])[0]
    x_l = phi_star(problem, x_u)
    F_true = problem.upper_oracle(np.concatenate([x_u, x_l])[None, :])[0]
    assert abs(gap - abs(F_true - F_est)) < 1e-10


# -- probe set ----------------------------------------------------------------------


def test_probe_set_is_shared_across_calls():
    problem_a = make_problem("camel_branin")
    problem_b = make_problem("camel_branin")
    a = sample_probe_set(problem_a, master_seed=11)
    b = sample_probe_set(problem_b, master_seed=11)
    assert np.array_equal(a, b)
    assert a.shape == (300, 1)


def test_probe_set_depends_on_seed_and_problem():
    problem = make_problem("camel_branin")
    a = sample_probe_set(problem, master_seed=11)
    b = sample_probe_set(problem, master_seed=12)
    assert not np.array_equal(a, b)
    smd = make_problem("smd1")
    c = sample_probe_set(smd, master_seed=11)
    assert c.shape == (300, 2)
