"""Rewrite an MDP so that every state-action pair has at most two successors.

A pair ``(s, a)`` with successors ``s_1 < ... < s_k`` (``k > 2``) becomes a
chain of auxiliary states ``x_2 .. x_{k-1}``. From ``(s, a)`` the process
either lands on ``s_1`` or enters ``x_2``; from ``x_i`` the single action
``tau`` either lands on ``s_i`` or moves on to ``x_{i+1}``, and ``x_{k-1}``
splits between ``s_{k-1}`` and ``s_k``. Auxiliary states pay no reward and
do not discount, so values and path probabilities carry over unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidInput
from .mdp import StochasticPolicy, TabularMdp, evaluate_policy, path_probability

SUFFIX_MIN = 1e-15
ORDERS = ("ascending",)

__all__ = [
    "TwoSuccessorMdp",
    "PreservationReport",
    "chain_split",
    "transform_mdp",
    "extend_policy",
    "restrict_policy",
    "verify_preservation",
    "collapse",
]


@dataclass(frozen=True)
class TwoSuccessorMdp:
    """Transformed MDP plus the provenance of its auxiliary states.

    ``aux_index[(s, a, i)]`` is the id of chain state ``x_i`` created for
    ``(s, a)``; ids start at ``n_main``.
    """

    mdp: TabularMdp
    n_main: int
    aux_index: dict
    tau_action: int

    @property
    def n_aux(self) -> int:
        return self.mdp.n_states - self.n_main

    def aux_records(self) -> list[tuple[int, int, int, int]]:
        """``(x, s, a, i)`` tuples sorted by auxiliary id."""
        return sorted((x, s, a, i) for (s, a, i), x in self.aux_index.items())

    def chain_path(self, s: int, a: int, s_next: int) -> list[int]:
        """The unique path from ``(s, a)`` to main state ``s_next``.

        Follows the chain until ``s_next`` appears in a row; if it never does
        the returned path has probability 0.
        """
        path = [s, a]
        cur, act = s, a
        for _ in range(self.n_aux + 1):
            row = dict(self.mdp.successors(cur, act) or [])
            if s_next in row:
                break
            aux = [x for x in row if x >= self.n_main]
            if not aux:
                break
            cur, act = aux[0], self.tau_action
            path += [cur, act]
        return path + [s_next]


@dataclass(frozen=True)
class PreservationReport:
    max_prob_gap: float
    perf_gap: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_prob_gap <= self.tol and self.perf_gap <= self.tol


def _order(succ: np.ndarray, prob: np.ndarray, order: str):
    if order not in ORDERS:
        raise InvalidInput(f"unknown successor order {order!r}")
    idx = np.argsort(succ, kind="stable")
    return succ[idx], prob[idx]


def chain_split(prob: Sequence[float]) -> tuple[float, list[tuple[float, float]]]:
    """Chain probabilities for an ordered row ``p_1..p_k`` with ``k > 2``.

    Returns ``P(x_2 | s, a)`` and, for ``i = 2..k-1``, the pair
    ``(P(s_i | x_i), P(next | x_i))`` where ``next`` is ``x_{i+1}`` or,
    for the last chain state, ``s_k``. Uses suffix sums rather than
    ``1 - prefix`` so the tail probabilities keep full relative precision.
    """
    p = np.asarray(prob, dtype=float)
    k = p.size
    if k <= 2:
        raise InvalidInput("chain needs more than two successors")
    suffix = np.cumsum(p[::-1])[::-1]
    if (suffix[1:] < SUFFIX_MIN).any():
        raise InvalidInput("row residual underflows; probabilities do not normalize")
    steps = []
    for i in range(1, k - 1):  # zero-based position of s_i for chain state x_{i+1}
        if i == k - 2:
            steps.append((p[i] / suffix[i], p[i + 1] / suffix[i]))
        else:
            steps.append((p[i] / suffix[i], suffix[i + 1] / suffix[i]))
    return float(suffix[1]), steps


def transform_mdp(m: TabularMdp, order: str = "ascending") -> TwoSuccessorMdp:
    """Two-successor version of ``m`` (which must discount uniformly)."""
    if not m.uniform_discount:
        raise InvalidInput("the transformation expects a uniformly discounted MDP")
    n_main, n_a = m.n_states, m.n_actions
    tau = n_a
    transitions: dict[tuple[int, int], list[tuple[int, float]]] = {}
    rewards: dict[tuple[int, int], float] = {}
    aux_index: dict[tuple[int, int, int], int] = {}
    next_id = n_main
    for s, a, succ, prob in m.rows():
        rewards[(s, a)] = float(m.reward[s, a])
        succ, prob = _order(np.asarray(succ), np.asarray(prob), order)
        k = succ.size
        if k <= 2:
            transitions[(s, a)] = list(zip(succ.tolist(), prob.tolist()))
            continue
        to_chain, steps = chain_split(prob)
        ids = list(range(next_id, next_id + k - 2))
        next_id += k - 2
        for j, x in enumerate(ids):
            aux_index[(s, a, j + 2)] = x
        transitions[(s, a)] = [(int(succ[0]), float(prob[0])), (ids[0], to_chain)]
        for j, (stay, move) in enumerate(steps):
            x = ids[j]
            target = ids[j + 1] if j + 1 < len(ids) else int(succ[k - 1])
            transitions[(x, tau)] = [(int(succ[j + 1]), stay), (target, move)]
            rewards[(x, tau)] = 0.0
    n_total = next_id
    gamma = np.ones(n_total)
    gamma[:n_main] = m.default_discount
    out = TabularMdp(
        n_total, n_a + 1, transitions, rewards,
        initial_state=m.initial_state, discount=m.default_discount,
        r_max=m.r_max, state_discount=gamma,
    )
    return TwoSuccessorMdp(out, n_main, aux_index, tau)


def extend_policy(pi: StochasticPolicy, t: TwoSuccessorMdp) -> StochasticPolicy:
    """Copy ``pi`` on main states and play ``tau`` in auxiliary states."""
    if pi.n_states != t.n_main or pi.n_actions != t.tau_action:
        raise DimensionMismatch(
            f"policy shape {pi.probs.shape} does not fit {t.n_main} main states "
            f"and {t.tau_action} actions"
        )
    probs = np.zeros((t.mdp.n_states, t.mdp.n_actions))
    probs[: t.n_main, : t.tau_action] = pi.probs
    probs[t.n_main :, t.tau_action] = 1.0
    return StochasticPolicy(probs)


def restrict_policy(pi: StochasticPolicy, t: TwoSuccessorMdp) -> StochasticPolicy:
    """Inverse of :func:`extend_policy`."""
    return StochasticPolicy(pi.probs[: t.n_main, : t.tau_action])


def collapse(t: TwoSuccessorMdp) -> dict[tuple[int, int], dict[int, float]]:
    """Reconstruct the original rows by multiplying probabilities along chains."""
    m = t.mdp
    rows: dict[tuple[int, int], dict[int, float]] = {}
    for s in range(t.n_main):
        for a in range(t.tau_action):
            first = m.successors(s, a)
            if first is None:
                continue
            out: dict[int, float] = {}
            stack = [(nxt, p) for nxt, p in first]
            while stack:
                state, p = stack.pop()
                if state < t.n_main:
                    out[state] = out.get(state, 0.0) + p
                else:
                    stack.extend((nxt, p * q) for nxt, q in m.successors(state, t.tau_action))
            rows[(s, a)] = out
    return rows


def verify_preservation(
    m: TabularMdp,
    t: TwoSuccessorMdp,
    pi: StochasticPolicy,
    tol: float = 1e-8,
) -> PreservationReport:
    """Largest path-probability gap and the performance gap under ``pi``."""
    gap = 0.0
    for s, a, succ, prob in m.rows():
        for s_next, p in zip(succ.tolist(), prob.tolist()):
            q = path_probability(t.mdp, t.chain_path(s, a, s_next))
            gap = max(gap, abs(p - q))
    v_orig = evaluate_policy(m, pi)[m.initial_state]
    v_2s = evaluate_policy(t.mdp, extend_policy(pi, t))[t.mdp.initial_state]
    return PreservationReport(gap, float(abs(v_orig - v_2s)), tol)
