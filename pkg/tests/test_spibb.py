import numpy as np
import pytest

from tightspi.data import BootstrapSet
from tightspi.errors import DimensionMismatch
from tightspi.mdp import StochasticPolicy, TabularMdp, evaluate_policy, greedy_policy
from tightspi.spibb import SpibbProblem, basic_rl_policy, constrained_policy, spibb_policy

from spibb_oracle import brute_force, random_problem


def test_matches_brute_force(rng):
    for _ in range(100):
        mle, pi_b, u = random_problem(rng)
        pi = spibb_policy(SpibbProblem(mle, pi_b, u))
        got = evaluate_policy(mle, pi)[mle.initial_state]
        assert got == pytest.approx(brute_force(mle, pi_b, u.mask), abs=1e-8)
        np.testing.assert_array_equal(pi.probs[u.mask], pi_b.probs[u.mask])


def test_improves_on_behavior_in_the_model(rng):
    for _ in range(50):
        mle, pi_b, u = random_problem(rng)
        pi = spibb_policy(SpibbProblem(mle, pi_b, u))
        assert np.all(evaluate_policy(mle, pi) >= evaluate_policy(mle, pi_b) - 1e-10)


def test_everything_bootstrapped_returns_behavior(rng):
    mle, pi_b, _ = random_problem(rng)
    u = BootstrapSet(np.ones_like(pi_b.probs, dtype=bool), 1e9)
    np.testing.assert_array_equal(spibb_policy(SpibbProblem(mle, pi_b, u)).probs, pi_b.probs)


def test_nothing_bootstrapped_is_optimal(rng):
    mle, pi_b, _ = random_problem(rng)
    u = BootstrapSet(np.zeros_like(pi_b.probs, dtype=bool), 0.0)
    pi = spibb_policy(SpibbProblem(mle, pi_b, u))
    best = evaluate_policy(mle, greedy_policy(mle, tol=1e-12))
    np.testing.assert_allclose(evaluate_policy(mle, pi), best, atol=1e-8)
    np.testing.assert_allclose(evaluate_policy(mle, basic_rl_policy(mle)), best, atol=1e-8)


def test_mask_shape_checked(rng):
    mle, pi_b, _ = random_problem(rng)
    with pytest.raises(DimensionMismatch):
        SpibbProblem(mle, pi_b, BootstrapSet(np.zeros((2, 2), dtype=bool), 0.0))


def test_constrained_policy_moves_free_mass():
    pi_b = np.array([[0.2, 0.3, 0.5]])
    mask = np.array([[True, False, False]])
    pi = constrained_policy(pi_b, mask, np.array([1]))
    np.testing.assert_allclose(pi.probs, [[0.2, 0.8, 0.0]])


def test_two_state_hand_example():
    # action 1 in state 0 earns 1 per step; the behavior plays it half the time
    m = TabularMdp(1, 2, {(0, 0): [(0, 1.0)], (0, 1): [(0, 1.0)]}, {(0, 1): 1.0}, discount=0.5)
    pi_b = StochasticPolicy(np.array([[0.5, 0.5]]))
    u = BootstrapSet(np.array([[True, False]]), 10.0)
    pi = spibb_policy(SpibbProblem(m, pi_b, u))
    np.testing.assert_allclose(pi.probs, [[0.5, 0.5]])
    u = BootstrapSet(np.array([[False, False]]), 10.0)
    np.testing.assert_allclose(spibb_policy(SpibbProblem(m, pi_b, u)).probs, [[0.0, 1.0]])
