"""scikit-learn style wrappers around the batch policy-improvement pipeline.

Transitions are passed as an ``(n, 4)`` array of ``(s, a, r, s')`` rows.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .bounds import BoundParams, convert_nmin
from .data import (
    TransitionCounts,
    bootstrap_set,
    build_mle_mdp,
    build_mle_two_successor,
    transform_dataset,
)
from .errors import InvalidInput
from .mdp import StochasticPolicy, TabularMdp, evaluate_policy
from .spibb import SpibbProblem, basic_rl_policy, spibb_policy
from .two_successor import extend_policy, restrict_policy

VARIANTS = ("spibb", "2s", "beta", "basic_rl")

__all__ = ["SPIBBEstimator", "TwoSuccessorCounter", "counts_from_array"]


def counts_from_array(X, n_states: int, n_actions: int) -> TransitionCounts:
    X = check_array(X, dtype=np.float64, ensure_min_samples=1)
    if X.shape[1] != 4:
        raise InvalidInput(f"expected (n, 4) transitions (s, a, r, s'), got shape {X.shape}")
    idx = X[:, [0, 1, 3]]
    if not np.array_equal(idx, np.round(idx)):
        raise InvalidInput("state and action columns must hold integers")
    s, a, t = (idx[:, j].astype(np.int64) for j in range(3))
    if s.min() < 0 or t.min() < 0 or s.max() >= n_states or t.max() >= n_states:
        raise InvalidInput("state index out of range")
    if a.min() < 0 or a.max() >= n_actions:
        raise InvalidInput("action index out of range")
    return TransitionCounts.from_arrays(n_states, n_actions, s, a, t, X[:, 2])


class SPIBBEstimator(BaseEstimator):
    """Improve ``behavior`` on the MLE model fitted from a batch of transitions.

    ``variant`` picks the bootstrap threshold: ``"spibb"`` uses ``n_wedge``
    directly, ``"2s"`` and ``"beta"`` use the equally safe converted
    thresholds, and ``"2s"`` solves on the chain-extended model.
    ``"basic_rl"`` ignores the behavior policy and returns the greedy policy.
    """

    def __init__(
        self,
        template: TabularMdp | None = None,
        behavior: StochasticPolicy | None = None,
        n_wedge: int = 100,
        variant: str = "spibb",
        delta: float = 0.1,
        v_max: float | None = None,
        rewards: str = "known",
    ):
        self.template = template
        self.behavior = behavior
        self.n_wedge = n_wedge
        self.variant = variant
        self.delta = delta
        self.v_max = v_max
        self.rewards = rewards

    def _threshold(self) -> float:
        m = self.template
        v_max = self.v_max if self.v_max is not None else m.r_max / (1 - m.default_discount)
        p = BoundParams(m.n_states, m.n_actions, v_max, m.default_discount, self.delta)
        target = {"spibb": "spibb", "2s": "2s", "beta": "beta"}[self.variant]
        return convert_nmin(p, self.n_wedge, target)

    def fit(self, X, y=None):
        if self.template is None:
            raise InvalidInput("template MDP is required")
        if self.variant not in VARIANTS:
            raise InvalidInput(f"variant must be one of {VARIANTS}")
        if self.variant != "basic_rl" and self.behavior is None:
            raise InvalidInput("behavior policy is required")
        m = self.template
        counts = counts_from_array(X, m.n_states, m.n_actions)
        if self.variant == "basic_rl":
            self.threshold_ = float("nan")
            self.policy_ = basic_rl_policy(build_mle_mdp(counts, m, self.rewards))
        elif self.variant == "2s":
            self.threshold_ = self._threshold()
            c2s = transform_dataset(counts)
            t = build_mle_two_successor(c2s, m, self.rewards)
            u = bootstrap_set(c2s, self.threshold_)
            pi = spibb_policy(SpibbProblem(t.mdp, extend_policy(self.behavior, t), u))
            self.policy_ = restrict_policy(pi, t)
        else:
            self.threshold_ = self._threshold()
            mle = build_mle_mdp(counts, m, self.rewards)
            u = bootstrap_set(counts, self.threshold_)
            self.policy_ = spibb_policy(SpibbProblem(mle, self.behavior, u))
        self.counts_ = counts
        return self

    def predict_proba(self, states) -> np.ndarray:
        check_is_fitted(self, "policy_")
        s = np.asarray(states, dtype=np.int64).ravel()
        return self.policy_.probs[s]

    def predict(self, states) -> np.ndarray:
        """Most probable action per state (lowest index on ties)."""
        return self.predict_proba(states).argmax(axis=1)

    def score(self, X=None, y=None) -> float:
        """Exact performance of the fitted policy in the template MDP."""
        check_is_fitted(self, "policy_")
        m = self.template
        return float(evaluate_policy(m, self.policy_)[m.initial_state])


class TwoSuccessorCounter(TransformerMixin, BaseEstimator):
    """Map a transition batch to its chain-extended counts."""

    def __init__(self, n_states: int = 1, n_actions: int = 1):
        self.n_states = n_states
        self.n_actions = n_actions

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return transform_dataset(counts_from_array(X, self.n_states, self.n_actions))
