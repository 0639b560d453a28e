"""Finite MDPs with sparse successor rows and state-dependent discounting.

A :class:`TabularMdp` stores one successor row per enabled state-action pair.
Rows are kept in a flat CSR layout (``pair_ptr``/``succ``/``prob``), where
pair ``k = s * n_actions + a``. Disabled pairs own an empty slice.

States whose discount is 1 are allowed as long as no cycle runs entirely
through them; value iteration then resolves those states level by level
inside each sweep, so every sweep contracts by the largest discount < 1.
"""
from __future__ import annotations

import graphlib
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidDiscount,
    InvalidInput,
    MalformedPath,
    NonConvergence,
)

ROW_TOL = 1e-12
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10**6

__all__ = [
    "TabularMdp",
    "StochasticPolicy",
    "ValueFunction",
    "value_iteration",
    "q_values",
    "performance",
    "evaluate_policy",
    "greedy_policy",
    "path_probability",
    "check_policy",
]


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class TabularMdp:
    """Finite MDP ``(S, A, initial_state, P, R, discount)``.

    Parameters
    ----------
    n_states, n_actions : int
    transitions : mapping
        ``{(s, a): [(s_next, prob), ...]}``. Pairs that are missing are
        disabled.
    rewards : mapping or array
        ``{(s, a): r}`` or an ``(n_states, n_actions)`` array. Entries for
        disabled pairs are ignored.
    initial_state : int
    discount : float
        Default discount in (0, 1).
    r_max : float, optional
        Reward bound; defaults to the largest absolute reward (or 1).
    state_discount : sequence of float, optional
        Per-state discount in (0, 1]. Defaults to ``discount`` everywhere.
    """

    def __init__(
        self,
        n_states: int,
        n_actions: int,
        transitions: Mapping[tuple[int, int], Iterable[tuple[int, float]]],
        rewards=None,
        *,
        initial_state: int = 0,
        discount: float = 0.95,
        r_max: float | None = None,
        state_discount: Sequence[float] | None = None,
    ):
        n_states, n_actions = int(n_states), int(n_actions)
        if n_states < 1 or n_actions < 1:
            raise InvalidInput("an MDP needs at least one state and one action")
        n_pairs = n_states * n_actions
        rows: list[list[tuple[int, float]] | None] = [None] * n_pairs
        for (s, a), row in transitions.items():
            s, a = int(s), int(a)
            if not (0 <= s < n_states and 0 <= a < n_actions):
                raise InvalidInput(f"pair ({s}, {a}) out of range")
            rows[s * n_actions + a] = sorted((int(t), float(p)) for t, p in row)

        counts = np.array([0 if r is None else len(r) for r in rows], dtype=np.int64)
        pair_ptr = np.zeros(n_pairs + 1, dtype=np.int64)
        np.cumsum(counts, out=pair_ptr[1:])
        succ = np.fromiter(
            (t for r in rows if r is not None for t, _ in r), dtype=np.int64, count=int(pair_ptr[-1])
        )
        prob = np.fromiter(
            (p for r in rows if r is not None for _, p in r), dtype=float, count=int(pair_ptr[-1])
        )
        enabled = (counts > 0).reshape(n_states, n_actions)

        reward = np.zeros((n_states, n_actions))
        if rewards is not None:
            if isinstance(rewards, Mapping):
                for (s, a), r in rewards.items():
                    reward[int(s), int(a)] = float(r)
            else:
                arr = np.asarray(rewards, dtype=float)
                if arr.shape != (n_states, n_actions):
                    raise DimensionMismatch(
                        f"rewards shape {arr.shape} != {(n_states, n_actions)}"
                    )
                reward[:] = arr
        self._init_arrays(
            n_states, n_actions, pair_ptr, succ, prob, enabled, reward,
            initial_state, discount, r_max, state_discount,
        )

    @classmethod
    def from_csr(
        cls,
        n_states: int,
        n_actions: int,
        pair_ptr: np.ndarray,
        succ: np.ndarray,
        prob: np.ndarray,
        reward: np.ndarray,
        *,
        initial_state: int = 0,
        discount: float = 0.95,
        r_max: float | None = None,
        state_discount: Sequence[float] | None = None,
    ) -> "TabularMdp":
        """Build directly from the flat row layout (successors sorted per row)."""
        self = cls.__new__(cls)
        pair_ptr = np.asarray(pair_ptr, dtype=np.int64)
        enabled = (np.diff(pair_ptr) > 0).reshape(n_states, n_actions)
        self._init_arrays(
            int(n_states), int(n_actions), pair_ptr,
            np.asarray(succ, dtype=np.int64), np.asarray(prob, dtype=float),
            enabled, np.array(reward, dtype=float),
            initial_state, discount, r_max, state_discount,
        )
        return self

    def _init_arrays(
        self, n_states, n_actions, pair_ptr, succ, prob, enabled, reward,
        initial_state, discount, r_max, state_discount,
    ):
        self.n_states = n_states
        self.n_actions = n_actions
        self.initial_state = int(initial_state)
        self.default_discount = float(discount)
        n_pairs = n_states * n_actions
        if pair_ptr.shape != (n_pairs + 1,) or pair_ptr[0] != 0:
            raise InvalidInput("malformed row pointer")
        reward = np.where(enabled, reward, 0.0)

        entry_pair = np.repeat(np.arange(n_pairs), np.diff(pair_ptr))
        self.pair_ptr = _readonly(pair_ptr)
        self.succ = _readonly(succ)
        self.prob = _readonly(prob)
        self.entry_pair = _readonly(entry_pair)
        self.enabled = _readonly(enabled)
        self.reward = _readonly(reward)

        if not (0 < self.default_discount < 1):
            raise InvalidDiscount(f"default discount {discount} outside (0, 1)")
        if state_discount is None:
            gamma = np.full(n_states, self.default_discount)
        else:
            gamma = np.array(state_discount, dtype=float)
            if gamma.shape != (n_states,):
                raise DimensionMismatch("state_discount must have one entry per state")
        self.discount = _readonly(gamma)
        if r_max is None:
            r_max = float(np.abs(reward).max()) if reward.size else 0.0
            r_max = r_max or 1.0
        self.r_max = float(r_max)
        self._validate()
        self._levels = self._undiscounted_levels()

    # -- validation -------------------------------------------------------
    def _validate(self) -> None:
        n_s, n_a = self.n_states, self.n_actions
        if not 0 <= self.initial_state < n_s:
            raise InvalidInput(f"initial state {self.initial_state} out of range")
        if self.succ.size and (self.succ.min() < 0 or self.succ.max() >= n_s):
            raise InvalidInput("successor index out of range")
        if self.prob.size and ((self.prob <= 0).any() or (self.prob > 1).any()):
            raise InvalidInput("transition probabilities must lie in (0, 1]")
        sums = np.bincount(self.entry_pair, weights=self.prob, minlength=n_s * n_a)
        bad = self.enabled.ravel() & (np.abs(sums - 1.0) > ROW_TOL)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise InvalidInput(
                f"row ({k // n_a}, {k % n_a}) sums to {sums[k]!r}, not 1"
            )
        same_row = self.entry_pair[1:] == self.entry_pair[:-1]
        if (same_row & (np.diff(self.succ) <= 0)).any():
            raise InvalidInput("successors must be unique and sorted within a row")
        if not self.enabled.any(axis=1).all():
            s = int(np.flatnonzero(~self.enabled.any(axis=1))[0])
            raise InvalidInput(f"state {s} has no enabled action")
        if (np.abs(self.reward) > self.r_max * (1 + 1e-12)).any():
            raise InvalidInput("reward exceeds r_max")
        if ((self.discount <= 0) | (self.discount > 1)).any():
            raise InvalidDiscount("state discounts must lie in (0, 1]")
        if (self.discount == 1).all():
            raise InvalidDiscount("at least one state must discount")

    def _undiscounted_levels(self) -> list[np.ndarray]:
        """Group discount-1 states by height in their (acyclic) subgraph.

        Level ``i`` only leads to discounting states or to levels ``< i``.
        """
        und = self.discount == 1.0
        if not und.any():
            return []
        src = self.entry_pair // self.n_actions
        mask = und[src] & und[self.succ]
        graph: dict[int, set[int]] = {int(s): set() for s in np.flatnonzero(und)}
        for s, t in zip(src[mask].tolist(), self.succ[mask].tolist()):
            graph[s].add(t)
        height: dict[int, int] = {}
        try:
            for s in graphlib.TopologicalSorter(graph).static_order():
                height[s] = 1 + max((height[t] for t in graph[s]), default=0)
        except graphlib.CycleError as exc:
            raise InvalidDiscount(
                f"cycle through undiscounted states: {exc.args[1]}"
            ) from None
        n_levels = max(height.values())
        buckets: list[list[int]] = [[] for _ in range(n_levels)]
        for s, h in height.items():
            buckets[h - 1].append(s)
        return [np.array(sorted(b), dtype=np.int64) for b in buckets]

    # -- accessors --------------------------------------------------------
    def is_enabled(self, s: int, a: int) -> bool:
        return bool(self.enabled[s, a])

    def enabled_actions(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.enabled[s])

    def successors(self, s: int, a: int) -> list[tuple[int, float]] | None:
        """Successor row of ``(s, a)``, or ``None`` when the pair is disabled."""
        if not self.enabled[s, a]:
            return None
        k = s * self.n_actions + a
        lo, hi = self.pair_ptr[k], self.pair_ptr[k + 1]
        return list(zip(self.succ[lo:hi].tolist(), self.prob[lo:hi].tolist()))

    def rows(self):
        """Yield ``(s, a, successors, probs)`` for every enabled pair."""
        n_a = self.n_actions
        ptr = self.pair_ptr
        for k in np.flatnonzero(self.enabled.ravel()):
            lo, hi = ptr[k], ptr[k + 1]
            yield int(k // n_a), int(k % n_a), self.succ[lo:hi], self.prob[lo:hi]

    @property
    def n_pairs(self) -> int:
        return int(self.enabled.sum())

    @property
    def uniform_discount(self) -> bool:
        return bool((self.discount == self.default_discount).all())

    @property
    def contraction(self) -> float:
        """Largest discount below 1."""
        return float(self.discount[self.discount < 1].max())

    def is_absorbing(self, s: int) -> bool:
        return bool(self.absorbing_mask()[s])

    def absorbing_mask(self) -> np.ndarray:
        """Boolean mask of states whose every enabled action self-loops surely."""
        self_loop = np.zeros(self.n_states * self.n_actions, dtype=bool)
        single = np.diff(self.pair_ptr) == 1
        first = self.pair_ptr[:-1][single]
        pairs = np.flatnonzero(single)
        self_loop[pairs] = self.succ[first] == pairs // self.n_actions
        self_loop = self_loop.reshape(self.n_states, self.n_actions)
        return np.where(self.enabled, self_loop, True).all(axis=1)

    def dense_transitions(self) -> np.ndarray:
        """``P[s, a, s']`` as a dense array (zeros on disabled pairs)."""
        P = np.zeros((self.n_states * self.n_actions, self.n_states))
        P[self.entry_pair, self.succ] = self.prob
        return P.reshape(self.n_states, self.n_actions, self.n_states)

    def policy_matrix(self, policy: "StochasticPolicy") -> np.ndarray:
        """State-to-state transition matrix under ``policy`` (dense)."""
        w = policy.probs.ravel()[self.entry_pair] * self.prob
        P = np.zeros((self.n_states, self.n_states))
        np.add.at(P, (self.entry_pair // self.n_actions, self.succ), w)
        return P

    def with_rewards(self, rewards) -> "TabularMdp":
        return TabularMdp.from_csr(
            self.n_states, self.n_actions, self.pair_ptr.copy(), self.succ.copy(),
            self.prob.copy(), np.asarray(rewards, dtype=float),
            initial_state=self.initial_state, discount=self.default_discount,
            r_max=None, state_discount=self.discount.copy(),
        )

    def __repr__(self) -> str:
        return (
            f"TabularMdp(n_states={self.n_states}, n_actions={self.n_actions}, "
            f"pairs={self.n_pairs}, gamma={self.default_discount})"
        )


class StochasticPolicy:
    """Row-stochastic table ``probs[s, a]``."""

    def __init__(self, probs):
        arr = np.array(probs, dtype=float)
        if arr.ndim != 2:
            raise DimensionMismatch("policy table must be 2-d")
        if (arr < 0).any():
            raise InvalidInput("negative action probability")
        sums = arr.sum(axis=1)
        if (np.abs(sums - 1.0) > ROW_TOL).any():
            s = int(np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)[0])
            raise InvalidInput(f"policy row {s} sums to {sums[s]!r}")
        self.probs = _readonly(arr)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "StochasticPolicy":
        actions = np.asarray(actions, dtype=np.int64)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, mdp: TabularMdp) -> "StochasticPolicy":
        en = mdp.enabled.astype(float)
        return cls(en / en.sum(axis=1, keepdims=True))

    def greedy_actions(self) -> np.ndarray:
        return self.probs.argmax(axis=1)

    def is_deterministic(self) -> bool:
        return bool((self.probs.max(axis=1) == 1.0).all())

    def __eq__(self, other) -> bool:
        return isinstance(other, StochasticPolicy) and np.array_equal(self.probs, other.probs)

    def __repr__(self) -> str:
        return f"StochasticPolicy(n_states={self.n_states}, n_actions={self.n_actions})"


def check_policy(mdp: TabularMdp, policy: StochasticPolicy) -> None:
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise DimensionMismatch(
            f"policy shape {policy.probs.shape} does not match MDP "
            f"{(mdp.n_states, mdp.n_actions)}"
        )
    if (policy.probs[~mdp.enabled] > 0).any():
        raise InvalidInput("policy puts mass on a disabled action")


@dataclass(frozen=True)
class ValueFunction:
    values: np.ndarray
    iterations: int = 0
    residual: float = 0.0

    def __getitem__(self, s):
        return self.values[s]


class _Block:
    """Precomputed slice of the backup restricted to a subset of states."""

    def __init__(self, mdp: TabularMdp, states: np.ndarray, policy: np.ndarray | None):
        n_a = mdp.n_actions
        self.states = states
        pairs = (states[:, None] * n_a + np.arange(n_a)).ravel()
        lo, hi = mdp.pair_ptr[pairs], mdp.pair_ptr[pairs + 1]
        lengths = hi - lo
        self.entries = np.concatenate(
            [np.arange(a, b) for a, b in zip(lo.tolist(), hi.tolist())]
        ) if lengths.sum() else np.zeros(0, dtype=np.int64)
        self.local_pair = np.repeat(np.arange(pairs.size), lengths)
        self.succ = mdp.succ[self.entries]
        self.prob = mdp.prob[self.entries]
        self.reward = mdp.reward[states]
        self.gamma = mdp.discount[states][:, None]
        self.enabled = mdp.enabled[states]
        self.policy = None if policy is None else policy[states]
        self.size = pairs.size
        self.shape = (states.size, n_a)

    def backup(self, V: np.ndarray) -> np.ndarray:
        ev = np.bincount(
            self.local_pair, weights=self.prob * V[self.succ], minlength=self.size
        ).reshape(self.shape)
        Q = self.reward + self.gamma * ev
        if self.policy is not None:
            return (self.policy * Q).sum(axis=1)
        return np.where(self.enabled, Q, -np.inf).max(axis=1)


def value_iteration(
    mdp: TabularMdp,
    policy: StochasticPolicy | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ValueFunction:
    """Optimal values, or the values of ``policy`` when one is given.

    Stops once the sup-norm change on discounting states drops to
    ``tol * (1 - g) / g`` with ``g`` the largest discount below 1, which
    bounds the distance to the fixed point by ``tol``.
    """
    if tol <= 0:
        raise InvalidInput("tol must be positive")
    pi = None
    if policy is not None:
        check_policy(mdp, policy)
        pi = policy.probs
    g = mdp.contraction
    threshold = tol * (1.0 - g) / g
    levels = [_Block(mdp, lvl, pi) for lvl in mdp._levels]
    main = _Block(mdp, np.flatnonzero(mdp.discount < 1), pi)

    V = np.zeros(mdp.n_states)
    residual = math.inf
    for it in range(1, max_iter + 1):
        for blk in levels:
            V[blk.states] = blk.backup(V)
        new = main.backup(V)
        residual = float(np.abs(new - V[main.states]).max())
        V[main.states] = new
        if residual <= threshold:
            for blk in levels:
                V[blk.states] = blk.backup(V)
            return ValueFunction(_readonly(V), it, residual)
    raise NonConvergence(
        f"value iteration did not reach residual {threshold:.3g} in {max_iter} sweeps "
        f"(last residual {residual:.3g})"
    )


def q_values(mdp: TabularMdp, values) -> np.ndarray:
    """One-step lookahead ``Q[s, a]``; ``-inf`` on disabled pairs."""
    V = np.asarray(getattr(values, "values", values), dtype=float)
    ev = np.bincount(
        mdp.entry_pair, weights=mdp.prob * V[mdp.succ], minlength=mdp.n_states * mdp.n_actions
    ).reshape(mdp.n_states, mdp.n_actions)
    Q = mdp.reward + mdp.discount[:, None] * ev
    return np.where(mdp.enabled, Q, -np.inf)


def performance(
    mdp: TabularMdp,
    policy: StochasticPolicy,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> float:
    """Value of the initial state under ``policy``."""
    return float(value_iteration(mdp, policy, tol, max_iter).values[mdp.initial_state])


def evaluate_policy(mdp: TabularMdp, policy: StochasticPolicy) -> np.ndarray:
    """Exact policy values from the linear system ``(I - diag(g) P_pi) V = R_pi``."""
    check_policy(mdp, policy)
    r_pi = (policy.probs * mdp.reward).sum(axis=1)
    n = mdp.n_states
    if n <= 1500:
        A = np.eye(n) - mdp.discount[:, None] * mdp.policy_matrix(policy)
        return np.linalg.solve(A, r_pi)
    from scipy import sparse
    from scipy.sparse.linalg import spsolve

    src = mdp.entry_pair // mdp.n_actions
    w = policy.probs.ravel()[mdp.entry_pair] * mdp.prob * mdp.discount[src]
    P = sparse.csr_matrix((w, (src, mdp.succ)), shape=(n, n))
    return spsolve((sparse.identity(n, format="csr") - P).tocsc(), r_pi)


def greedy_policy(mdp: TabularMdp, tol: float = DEFAULT_TOL) -> StochasticPolicy:
    """Deterministic argmax policy of the optimal Q (ties go to the lowest action)."""
    V = value_iteration(mdp, None, tol)
    return StochasticPolicy.deterministic(q_values(mdp, V).argmax(axis=1), mdp.n_actions)


def path_probability(mdp: TabularMdp, path: Sequence[int]) -> float:
    """Probability of the alternating path ``<s0, a0, s1, ..., sn>``."""
    if len(path) % 2 != 1:
        raise MalformedPath("a path alternates states and actions and ends in a state")
    states, actions = path[0::2], path[1::2]
    for s in states:
        if not 0 <= s < mdp.n_states:
            raise MalformedPath(f"state {s} out of range")
    for a in actions:
        if not 0 <= a < mdp.n_actions:
            raise MalformedPath(f"action {a} out of range")
    p = 1.0
    for s, a, t in zip(states[:-1], actions, states[1:]):
        row = mdp.successors(s, a)
        if row is None:
            return 0.0
        step = dict(row).get(t, 0.0)
        if step == 0.0:
            return 0.0
        p *= step
    return p
