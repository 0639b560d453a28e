import numpy as np
import pytest

from tightspi.mdp import StochasticPolicy, TabularMdp


def random_mdp(rng, n_states=None, n_actions=None, dense=True, gamma=0.9, sparse_enable=False):
    """Random MDP; dense rows put mass on every state."""
    n_s = n_states or int(rng.integers(1, 11))
    n_a = n_actions or int(rng.integers(1, 5))
    transitions, rewards = {}, {}
    for s in range(n_s):
        acts = range(n_a)
        if sparse_enable:
            acts = [a for a in range(n_a) if rng.random() < 0.7] or [0]
        for a in acts:
            if dense:
                succ = np.arange(n_s)
            else:
                k = int(rng.integers(1, n_s + 1))
                succ = np.sort(rng.choice(n_s, size=k, replace=False))
            p = rng.dirichlet(np.ones(succ.size))
            transitions[(s, a)] = list(zip(succ.tolist(), p.tolist()))
            rewards[(s, a)] = float(rng.uniform(-1, 1))
    return TabularMdp(n_s, n_a, transitions, rewards, initial_state=0, discount=gamma, r_max=1.0)


def random_policy(rng, mdp):
    w = np.where(mdp.enabled, rng.random(mdp.enabled.shape) + 1e-3, 0.0)
    return StochasticPolicy(w / w.sum(axis=1, keepdims=True))


def example_mdp():
    """Five-successor example row: (0, 0) -> {1: .1, 2: .2, 3: .3, 4: .4}."""
    transitions = {
        (0, 0): [(1, 0.1), (2, 0.2), (3, 0.3), (4, 0.4)],
        (0, 1): [(1, 0.5), (2, 0.5)],
    }
    for s in range(1, 5):
        transitions[(s, 0)] = [(s, 1.0)]
    rewards = {(s, 0): float(s) / 4 for s in range(1, 5)}
    rewards[(0, 1)] = 0.3
    return TabularMdp(5, 2, transitions, rewards, initial_state=0, discount=0.9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
