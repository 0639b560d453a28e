import numpy as np
import pytest

from tightspi.errors import DimensionMismatch, InvalidInput
from tightspi.mdp import StochasticPolicy, TabularMdp, evaluate_policy, path_probability
from tightspi.two_successor import (
    chain_split,
    collapse,
    extend_policy,
    restrict_policy,
    transform_mdp,
    verify_preservation,
)

from conftest import example_mdp, random_mdp, random_policy


def test_every_row_has_at_most_two_successors(rng):
    for _ in range(50):
        t = transform_mdp(random_mdp(rng, dense=False))
        for _, _, succ, _ in t.mdp.rows():
            assert len(succ) <= 2


def test_example_chain_structure():
    m = example_mdp()
    t = transform_mdp(m)
    assert t.n_aux == 2 and t.tau_action == 2
    x2, x3 = t.aux_index[(0, 0, 2)], t.aux_index[(0, 0, 3)]
    assert (x2, x3) == (5, 6)
    assert dict(t.mdp.successors(0, 0)) == pytest.approx({1: 0.1, x2: 0.9})
    assert dict(t.mdp.successors(x2, 2)) == pytest.approx({2: 0.2 / 0.9, x3: 0.7 / 0.9})
    assert dict(t.mdp.successors(x3, 2)) == pytest.approx({3: 3 / 7, 4: 4 / 7})
    assert t.mdp.discount[x2] == 1.0 and t.mdp.reward[x2, 2] == 0.0
    assert not t.mdp.enabled[x2, :2].any()
    # two-successor rows are copied unchanged
    assert dict(t.mdp.successors(0, 1)) == {1: 0.5, 2: 0.5}


def test_path_probabilities_preserved(rng):
    for _ in range(30):
        m = random_mdp(rng, dense=False)
        t = transform_mdp(m)
        for s, a, succ, prob in m.rows():
            for s_next, p in zip(succ.tolist(), prob.tolist()):
                q = path_probability(t.mdp, t.chain_path(s, a, s_next))
                assert q == pytest.approx(p, abs=1e-12)


def test_collapse_recovers_original_rows(rng):
    m = random_mdp(rng, 6, 3)
    rows = collapse(transform_mdp(m))
    for s, a, succ, prob in m.rows():
        assert rows[(s, a)] == pytest.approx(dict(zip(succ.tolist(), prob.tolist())), abs=1e-12)


def test_performance_preserved_against_direct_solve(rng):
    for _ in range(30):
        m = random_mdp(rng, dense=False)
        t = transform_mdp(m)
        pi = random_policy(rng, m)
        rep = verify_preservation(m, t, pi)
        assert rep.passed
        v = evaluate_policy(m, pi)[0]
        v2 = evaluate_policy(t.mdp, extend_policy(pi, t))[0]
        assert v == pytest.approx(v2, abs=1e-10)


def test_extend_restrict_round_trip(rng):
    m = random_mdp(rng, 4, 3)
    t = transform_mdp(m)
    pi = random_policy(rng, m)
    ext = extend_policy(pi, t)
    assert np.all(ext.probs[t.n_main :, t.tau_action] == 1.0)
    np.testing.assert_array_equal(restrict_policy(ext, t).probs, pi.probs)
    with pytest.raises(DimensionMismatch):
        extend_policy(StochasticPolicy(np.full((4, 2), 0.5)), t)


def test_chain_split_suffix_ratios():
    first, steps = chain_split([0.1, 0.2, 0.3, 0.4])
    assert first == pytest.approx(0.9)
    assert steps[0] == pytest.approx((0.2 / 0.9, 0.7 / 0.9))
    assert steps[-1] == pytest.approx((3 / 7, 4 / 7))


def test_tiny_suffix_rejected():
    m = TabularMdp(4, 1, {(0, 0): [(1, 1 - 2e-16), (2, 1e-16), (3, 1e-16)],
                          (1, 0): [(1, 1.0)], (2, 0): [(2, 1.0)], (3, 0): [(3, 1.0)]})
    with pytest.raises(InvalidInput):
        transform_mdp(m)


def test_non_uniform_discount_rejected():
    m = TabularMdp(2, 1, {(0, 0): [(1, 1.0)], (1, 0): [(1, 1.0)]}, state_discount=[0.9, 0.5])
    with pytest.raises(InvalidInput):
        transform_mdp(m)
