import numpy as np
import pytest
from sklearn.base import clone

from tightspi.data import sample_steps
from tightspi.environments import EnvSpec, behavior_softmax_q, build_env
from tightspi.errors import InvalidInput
from tightspi.estimators import SPIBBEstimator, TwoSuccessorCounter
from tightspi.mdp import evaluate_policy


@pytest.fixture(scope="module")
def grid():
    m = build_env(EnvSpec("gridworld"))
    pi_b = behavior_softmax_q(m, q_steps=5000)
    b = sample_steps(m, pi_b, 3000, 200, 1)
    X = np.column_stack([b.states, b.actions, b.rewards, b.next_states])
    return m, pi_b, X


def test_params_and_clone(grid):
    m, pi_b, _ = grid
    est = SPIBBEstimator(m, pi_b, n_wedge=50, variant="beta")
    assert est.get_params()["n_wedge"] == 50
    assert clone(est).get_params()["variant"] == "beta"


@pytest.mark.parametrize("variant", ["spibb", "2s", "beta", "basic_rl"])
def test_fit_predict(grid, variant):
    m, pi_b, X = grid
    est = SPIBBEstimator(m, pi_b, variant=variant).fit(X)
    proba = est.predict_proba(np.arange(25))
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    np.testing.assert_array_equal(est.predict([0, 1]), proba[:2].argmax(axis=1))
    assert est.score() == pytest.approx(evaluate_policy(m, est.policy_)[m.initial_state])


def test_two_successor_variants_agree(grid):
    m, pi_b, X = grid
    a = SPIBBEstimator(m, pi_b, variant="2s").fit(X)
    # same threshold on the original model: aux pairs are forced, so values agree
    from tightspi.data import bootstrap_set, build_mle_mdp
    from tightspi.spibb import SpibbProblem, spibb_policy

    c = a.counts_
    pi = spibb_policy(SpibbProblem(build_mle_mdp(c, m), pi_b, bootstrap_set(c, a.threshold_)))
    assert a.score() == pytest.approx(evaluate_policy(m, pi)[m.initial_state], abs=1e-8)


def test_input_validation(grid):
    m, pi_b, X = grid
    with pytest.raises(InvalidInput):
        SPIBBEstimator(m, pi_b).fit(X[:, :3])
    with pytest.raises(InvalidInput):
        SPIBBEstimator(m, pi_b).fit(X + np.array([0.5, 0, 0, 0]))
    with pytest.raises(InvalidInput):
        SPIBBEstimator(m, pi_b, variant="dqn").fit(X)
    with pytest.raises(InvalidInput):
        SPIBBEstimator(m, None).fit(X)


def test_counter_transformer():
    X = np.array([[0, 0, 0.0, 1]] * 3 + [[0, 0, 0.0, 2]] * 2 + [[0, 0, 0.0, 3]] * 5)
    c2s = TwoSuccessorCounter(4, 1).fit_transform(X)
    assert sorted(c2s.counts.triples()) == [(0, 0, 1, 3), (0, 0, 4, 7), (4, 1, 2, 2), (4, 1, 3, 5)]
