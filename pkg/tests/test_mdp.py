import itertools

import numpy as np
import pytest

from tightspi.errors import DimensionMismatch, InvalidInput, MalformedPath
from tightspi.mdp import (
    StochasticPolicy,
    TabularMdp,
    evaluate_policy,
    greedy_policy,
    path_probability,
    performance,
    q_values,
    value_iteration,
)

from conftest import random_mdp, random_policy


def test_rows_must_sum_to_one():
    with pytest.raises(InvalidInput):
        TabularMdp(2, 1, {(0, 0): [(1, 0.5)], (1, 0): [(1, 1.0)]})


def test_negative_probability_rejected():
    with pytest.raises(InvalidInput):
        TabularMdp(2, 1, {(0, 0): [(0, 1.5), (1, -0.5)], (1, 0): [(1, 1.0)]})


def test_policy_shape_checked(rng):
    m = random_mdp(rng, 3, 2)
    with pytest.raises(DimensionMismatch):
        evaluate_policy(m, StochasticPolicy(np.full((3, 3), 1 / 3)))


def test_policy_evaluation_matches_dense_solve(rng):
    for _ in range(20):
        m = random_mdp(rng, dense=False)
        pi = random_policy(rng, m)
        P = m.dense_transitions()
        P_pi = np.einsum("sa,sat->st", pi.probs, P)
        r_pi = (pi.probs * m.reward).sum(axis=1)
        oracle = np.linalg.solve(np.eye(m.n_states) - m.default_discount * P_pi, r_pi)
        np.testing.assert_allclose(evaluate_policy(m, pi), oracle, atol=1e-12)
        vi = value_iteration(m, pi, tol=1e-11).values
        np.testing.assert_allclose(vi, oracle, atol=1e-10)


def test_optimal_value_equals_best_deterministic_policy(rng):
    for _ in range(10):
        m = random_mdp(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)), dense=False)
        best = max(
            evaluate_policy(m, StochasticPolicy.deterministic(acts, m.n_actions))[0]
            for acts in itertools.product(range(m.n_actions), repeat=m.n_states)
        )
        assert value_iteration(m, tol=1e-11).values[0] == pytest.approx(best, abs=1e-10)
        assert performance(m, greedy_policy(m)) == pytest.approx(best, abs=1e-8)


def test_q_values_disabled_pairs_are_minus_inf():
    m = TabularMdp(2, 2, {(0, 0): [(1, 1.0)], (1, 0): [(1, 1.0)], (1, 1): [(0, 1.0)]}, {(0, 0): 1.0})
    Q = q_values(m, np.zeros(2))
    assert Q[0, 1] == -np.inf and Q[0, 0] == 1.0


def test_path_probability_and_malformed_paths(rng):
    m = random_mdp(rng, 3, 2)
    p = path_probability(m, [0, 1, 2, 0, 1])
    assert p == pytest.approx(dict(m.successors(0, 1))[2] * dict(m.successors(2, 0))[1])
    with pytest.raises(MalformedPath):
        path_probability(m, [0, 1])
    with pytest.raises(MalformedPath):
        path_probability(m, [0, 5, 1])


def test_unit_discount_states_are_evaluated():
    # state 1 passes through with discount 1, so 0 -> 1 -> 2 costs one discount step
    m = TabularMdp(
        3, 1, {(0, 0): [(1, 1.0)], (1, 0): [(2, 1.0)], (2, 0): [(2, 1.0)]},
        {(2, 0): 1.0}, discount=0.5, state_discount=[0.5, 1.0, 0.5],
    )
    pi = StochasticPolicy.uniform(m)
    expect = 0.5 * 1.0 * 2.0
    assert evaluate_policy(m, pi)[0] == pytest.approx(expect)
    assert value_iteration(m, pi, tol=1e-12).values[0] == pytest.approx(expect, abs=1e-10)
