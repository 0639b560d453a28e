import math

import numpy as np
import pytest

from tightspi.data import (
    TransitionCounts,
    Trajectory,
    bootstrap_set,
    build_mle_mdp,
    build_mle_two_successor,
    count,
    sample_steps,
    sample_trajectories,
    transform_dataset,
)
from tightspi.errors import InvalidInput
from tightspi.mdp import StochasticPolicy, TabularMdp, evaluate_policy, path_probability
from tightspi.two_successor import extend_policy

from conftest import random_mdp, random_policy


def three_state():
    t = {
        (0, 0): [(0, 0.2), (1, 0.5), (2, 0.3)],
        (0, 1): [(1, 1.0)],
        (1, 0): [(0, 0.6), (2, 0.4)],
        (1, 1): [(1, 0.9), (2, 0.1)],
        (2, 0): [(0, 0.7), (1, 0.3)],
        (2, 1): [(2, 0.5), (0, 0.5)],
    }
    return TabularMdp(3, 2, t, {(0, 0): 0.5, (2, 1): 1.0}, discount=0.9)


def row_counts(s, a, hist, n_states=4, n_actions=1):
    keys = [(s * n_actions + a) * n_states + t for t in hist]
    return TransitionCounts(n_states, n_actions, keys, list(hist.values()))


def test_deterministic_loop_gives_unique_trajectory():
    m = TabularMdp(2, 1, {(0, 0): [(1, 1.0)], (1, 0): [(0, 1.0)]}, {(0, 0): 1.0})
    trajs = sample_trajectories(m, StochasticPolicy.uniform(m), 4, 10, 0)
    assert len(trajs) == 1
    assert trajs[0].steps == [(0, 0, 1.0, 1), (1, 0, 0.0, 0), (0, 0, 1.0, 1), (1, 0, 0.0, 0)]


def test_empirical_frequencies_match_transition_probabilities():
    m = three_state()
    pi = StochasticPolicy(np.full((3, 2), 0.5))
    counts = sample_steps(m, pi, 10**6, 50, 7).counts(3, 2)
    for s, a, succ, prob in m.rows():
        n = counts.pair_counts[s, a]
        got_succ, got_n = counts.successor_counts(s, a)
        freq = dict(zip(got_succ.tolist(), (got_n / n).tolist()))
        for t, p in zip(succ.tolist(), prob.tolist()):
            assert abs(freq.get(t, 0.0) - p) <= 3 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_sampling_is_seeded_and_exact_length(rng):
    m = random_mdp(rng, 5, 3)
    pi = random_policy(rng, m)
    a = sample_steps(m, pi, 1234, 17, 99)
    b = sample_steps(m, pi, 1234, 17, 99)
    assert a.states.size == 1234
    for name in ("states", "actions", "rewards", "next_states", "episode_starts"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    for traj in a.trajectories():
        assert traj.states[0] == m.initial_state and traj.length <= 17


def test_episodes_stop_at_absorbing_states():
    m = TabularMdp(2, 1, {(0, 0): [(1, 1.0)], (1, 0): [(1, 1.0)]})
    batch = sample_steps(m, StochasticPolicy.uniform(m), 10, 50, 0)
    assert all(t.steps == [(0, 0, 0.0, 1)] for t in batch.trajectories())


def test_trajectory_must_chain():
    with pytest.raises(InvalidInput):
        Trajectory.from_steps([(0, 0, 0.0, 1), (2, 0, 0.0, 1)])


def test_count_basics_and_additivity(rng):
    assert count([], 3, 2).total == 0
    one = count([Trajectory.from_steps([(1, 1, 0.5, 2)])], 3, 2)
    assert one.pair_counts[1, 1] == 1 and list(one.triples()) == [(1, 1, 2, 1)]
    m = random_mdp(rng, 4, 2)
    pi = random_policy(rng, m)
    d1 = sample_trajectories(m, pi, 300, 20, 1)
    d2 = sample_trajectories(m, pi, 200, 20, 2)
    assert count(d1 + d2, 4, 2) == count(d1, 4, 2) + count(d2, 4, 2)
    c = count(d1, 4, 2)
    assert (c.pair_counts.sum(axis=1) >= 0).all()
    for s in range(4):
        for a in range(2):
            assert c.successor_counts(s, a)[1].sum() == c.pair_counts[s, a]


def test_mle_rows_and_unvisited_self_loop():
    template = TabularMdp(4, 1, {(s, 0): [(t, 0.25) for t in range(4)] for s in range(4)},
                          {(s, 0): 0.5 for s in range(4)})
    mle = build_mle_mdp(row_counts(0, 0, {1: 3, 2: 2, 3: 5}), template)
    assert dict(mle.successors(0, 0)) == pytest.approx({1: 0.3, 2: 0.2, 3: 0.5})
    assert mle.successors(2, 0) == [(2, 1.0)] and mle.reward[2, 0] == 0.0
    assert mle.reward[0, 0] == 0.5


def test_mle_estimated_rewards():
    template = three_state()
    c = TransitionCounts.from_arrays(3, 2, [0, 0, 1], [0, 0, 1], [1, 2, 1], [1.0, 0.0, 0.8])
    mle = build_mle_mdp(c, template, rewards="estimated")
    assert mle.reward[0, 0] == 0.5 and mle.reward[1, 1] == 0.8


def test_mle_l1_error_shrinks_like_inverse_sqrt():
    m = three_state()
    pi = StochasticPolicy(np.full((3, 2), 0.5))
    errs = []
    for n in (10**3, 10**5):
        e = []
        for seed in range(20):
            mle = build_mle_mdp(sample_steps(m, pi, n, 50, seed).counts(3, 2), m)
            e.append(np.abs(mle.dense_transitions() - m.dense_transitions()).sum(axis=2).max())
        errs.append(np.mean(e))
    # sqrt(100) = 10 times smaller, allow a factor 2 either way
    assert 5 < errs[0] / errs[1] < 20


def test_bootstrap_set_matches_filter(rng):
    for _ in range(20):
        m = random_mdp(rng, 5, 3)
        c = sample_steps(m, random_policy(rng, m), int(rng.integers(1, 300)), 20, int(rng.integers(1e6))).counts(5, 3)
        n_w = int(rng.integers(0, 20))
        u = bootstrap_set(c, n_w)
        expect = {(s, a) for s in range(5) for a in range(3) if c.pair_counts[s, a] <= n_w}
        assert u.members == expect
        assert u.members <= bootstrap_set(c, n_w + 5).members
    assert bootstrap_set(c, 0).members == {(s, a) for s in range(5) for a in range(3) if c.pair_counts[s, a] == 0}
    assert len(bootstrap_set(c, math.inf)) == 15
    with pytest.raises(InvalidInput):
        bootstrap_set(c, -1)


def test_transform_dataset_hand_tally():
    c2s = transform_dataset(row_counts(0, 0, {1: 3, 2: 2, 3: 5}))
    x2 = c2s.aux_index[(0, 0, 2)]
    assert x2 == 4 and c2s.tau_action == 1
    assert sorted(c2s.counts.triples()) == [(0, 0, 1, 3), (0, 0, 4, 7), (4, 1, 2, 2), (4, 1, 3, 5)]


def test_transform_dataset_keeps_small_rows():
    c = row_counts(0, 0, {1: 3, 3: 5})
    c2s = transform_dataset(c)
    assert c2s.aux_index == {} and list(c2s.counts.triples()) == list(c.triples())


def test_count_conservation_and_mle_path_products(rng):
    for _ in range(50):
        m = random_mdp(rng, dense=False)
        n_s, n_a = m.n_states, m.n_actions
        pi = random_policy(rng, m)
        c = sample_steps(m, pi, int(rng.integers(1, 500)), 30, int(rng.integers(1e9))).counts(n_s, n_a)
        c2s = transform_dataset(c)
        np.testing.assert_array_equal(c2s.counts.pair_counts[:n_s, :n_a], c.pair_counts)
        mle = build_mle_mdp(c, m)
        t = build_mle_two_successor(c2s, m)
        for s, a, succ, prob in mle.rows():
            if c.pair_counts[s, a] == 0:
                continue
            for s_next, p in zip(succ.tolist(), prob.tolist()):
                q = path_probability(t.mdp, t.chain_path(s, a, s_next))
                assert q == pytest.approx(p, abs=1e-12)
        v = evaluate_policy(mle, pi)[0]
        v2 = evaluate_policy(t.mdp, extend_policy(pi, t))[0]
        assert v == pytest.approx(v2, abs=1e-9)
