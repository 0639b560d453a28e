"""Baseline-bootstrapped policy improvement on an estimated MDP.

In every state the improved policy copies the behavior probabilities of
bootstrapped pairs and moves the remaining behavior mass onto the single
best non-bootstrapped action. Policy iteration over that family converges
in a handful of sweeps because each greedy step is closed-form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BootstrapSet
from .errors import DimensionMismatch, NonConvergence
from .mdp import (
    DEFAULT_TOL,
    StochasticPolicy,
    TabularMdp,
    check_policy,
    evaluate_policy,
    greedy_policy,
    q_values,
)

MAX_SWEEPS = 10**4
SWITCH_EPS = 1e-12

__all__ = ["SpibbProblem", "spibb_policy", "basic_rl_policy", "constrained_policy"]


@dataclass(frozen=True)
class SpibbProblem:
    mle: TabularMdp
    pi_b: StochasticPolicy
    u: BootstrapSet
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        check_policy(self.mle, self.pi_b)
        if self.u.mask.shape != (self.mle.n_states, self.mle.n_actions):
            raise DimensionMismatch("bootstrap mask does not match the MDP")


def constrained_policy(
    pi_b: np.ndarray, mask: np.ndarray, choice: np.ndarray
) -> StochasticPolicy:
    """Behavior mass on bootstrapped pairs, the rest on ``choice[s]``."""
    probs = np.where(mask, pi_b, 0.0)
    free_mass = np.where(mask, 0.0, pi_b).sum(axis=1)
    rows = np.flatnonzero(choice >= 0)
    probs[rows, choice[rows]] += free_mass[rows]
    return StochasticPolicy(probs)


def spibb_policy(problem: SpibbProblem, max_sweeps: int = MAX_SWEEPS) -> StochasticPolicy:
    mdp, mask = problem.mle, problem.u.mask
    pi_b = problem.pi_b.probs
    free = mdp.enabled & ~mask
    has_free = free.any(axis=1)
    if not has_free.any():
        return StochasticPolicy(pi_b.copy())

    V = evaluate_policy(mdp, problem.pi_b)
    choice = np.full(mdp.n_states, -1, dtype=np.int64)
    for sweep in range(max_sweeps):
        Q = np.where(free, q_values(mdp, V), -np.inf)
        best = Q.argmax(axis=1)
        if sweep == 0:
            new = np.where(has_free, best, -1)
        else:
            # only switch on a clear improvement so float noise cannot cycle
            cur = np.where(has_free, Q[np.arange(mdp.n_states), np.maximum(choice, 0)], 0.0)
            top = np.where(has_free, Q.max(axis=1), 0.0)
            better = top > cur + SWITCH_EPS * np.maximum(1.0, np.abs(cur))
            new = np.where(has_free & better, best, choice)
        if sweep > 0 and np.array_equal(new, choice):
            return constrained_policy(pi_b, mask, choice)
        choice = new
        V = evaluate_policy(mdp, constrained_policy(pi_b, mask, choice))
    raise NonConvergence(f"policy iteration did not settle in {max_sweeps} sweeps")


def basic_rl_policy(mle: TabularMdp, tol: float = DEFAULT_TOL) -> StochasticPolicy:
    """Unconstrained greedy policy of the estimated MDP."""
    return greedy_policy(mle, tol)
