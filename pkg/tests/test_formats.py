import io

import numpy as np
import pytest

from tightspi import formats
from tightspi.data import sample_steps
from tightspi.errors import InvalidInput
from tightspi.mdp import TabularMdp
from tightspi.two_successor import transform_mdp

from conftest import example_mdp, random_mdp, random_policy


def test_mdp_round_trip_is_exact(rng, tmp_path):
    for _ in range(10):
        m = random_mdp(rng, dense=False, sparse_enable=True)
        text = formats.dump_mdp(m)
        back = formats.parse_mdp(text)
        assert formats.dump_mdp(back) == text
        np.testing.assert_array_equal(back.prob, m.prob)
        np.testing.assert_array_equal(back.reward, m.reward)
        np.testing.assert_array_equal(back.enabled, m.enabled)


def test_per_state_discounts_survive(tmp_path):
    t = transform_mdp(example_mdp())
    path = str(tmp_path / "t.mdp")
    formats.write_mdp(path, t.mdp)
    formats.write_aux(path + ".aux", t)
    back = formats.read_mdp(path)
    np.testing.assert_array_equal(back.discount, t.mdp.discount)
    assert formats.read_aux(path + ".aux") == t.aux_index


def test_parse_errors():
    with pytest.raises(InvalidInput):
        formats.parse_mdp("t 0 0 0 1.0\n")
    with pytest.raises(InvalidInput):
        formats.parse_mdp("mdp 1 1 0 0.9 1\nq 0 0\n")
    with pytest.raises(InvalidInput):
        formats.parse_mdp("mdp 1 1 0 0.9 1\nt 0 0 zero 1.0\n")


def test_policy_counts_and_trajectories(rng, tmp_path):
    m = random_mdp(rng, 4, 2)
    pi = random_policy(rng, m)
    formats.write_policy(str(tmp_path / "p"), pi)
    np.testing.assert_array_equal(formats.read_policy(str(tmp_path / "p"), 4, 2).probs, pi.probs)
    with pytest.raises(InvalidInput):
        formats.read_policy(str(tmp_path / "p"), 2, 2)

    batch = sample_steps(m, pi, 300, 25, 4)
    c = batch.counts(4, 2)
    formats.write_counts(str(tmp_path / "c"), c)
    back = formats.read_counts(str(tmp_path / "c"), 4, 2)
    np.testing.assert_array_equal(back.keys, c.keys)
    np.testing.assert_array_equal(back.counts, c.counts)

    buf = io.StringIO()
    trajs = batch.trajectories()
    formats.write_trajectories(buf, trajs)
    buf.seek(0)
    again = formats.read_trajectories(buf)
    assert [t.steps for t in again] == [t.steps for t in trajs]
