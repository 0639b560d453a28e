"""Offline data: trajectory sampling, transition counts and MLE models.

Counts are stored sparsely as sorted keys ``(s * n_actions + a) * n_states + s'``
with their multiplicities, which is all the estimators below need.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidInput
from .mdp import StochasticPolicy, TabularMdp, check_policy
from .two_successor import ORDERS, TwoSuccessorMdp

__all__ = [
    "Trajectory",
    "TransitionCounts",
    "TwoSuccessorCounts",
    "BootstrapSet",
    "sample_steps",
    "sample_trajectories",
    "count",
    "build_mle_mdp",
    "bootstrap_set",
    "transform_dataset",
    "build_mle_two_successor",
]


@dataclass(frozen=True)
class Trajectory:
    """One episode as parallel arrays of ``(s, a, r, s')`` steps."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    def __post_init__(self):
        n = len(self.states)
        if not (len(self.actions) == len(self.rewards) == len(self.next_states) == n):
            raise DimensionMismatch("trajectory arrays differ in length")
        if n > 1 and (np.asarray(self.next_states[:-1]) != np.asarray(self.states[1:])).any():
            raise InvalidInput("trajectory steps do not chain")

    @classmethod
    def from_steps(cls, steps: Iterable[Sequence]) -> "Trajectory":
        steps = list(steps)
        if not steps:
            z = np.zeros(0, dtype=np.int64)
            return cls(z, z.copy(), np.zeros(0), z.copy())
        s, a, r, t = zip(*steps)
        return cls(
            np.asarray(s, dtype=np.int64), np.asarray(a, dtype=np.int64),
            np.asarray(r, dtype=float), np.asarray(t, dtype=np.int64),
        )

    def __len__(self) -> int:
        return len(self.states)

    @property
    def length(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> list[tuple[int, int, float, int]]:
        return list(zip(
            self.states.tolist(), self.actions.tolist(),
            self.rewards.tolist(), self.next_states.tolist(),
        ))


class TransitionCounts:
    """Tallies ``#D(s, a, s')`` with derived ``#D(s, a)`` and reward sums."""

    def __init__(
        self,
        n_states: int,
        n_actions: int,
        keys=(),
        counts=(),
        reward_sums=None,
    ):
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)
        keys = np.asarray(keys, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if keys.shape != counts.shape or keys.ndim != 1:
            raise DimensionMismatch("keys and counts must be matching 1-d arrays")
        if keys.size:
            if (np.diff(keys) <= 0).any():
                order = np.argsort(keys, kind="stable")
                keys, inv = np.unique(keys[order], return_inverse=True)
                counts = np.bincount(inv, weights=counts[order]).astype(np.int64)
            if keys[0] < 0 or keys[-1] >= self.n_states * self.n_states * self.n_actions:
                raise InvalidInput("count key out of range")
            keep = counts != 0
            keys, counts = keys[keep], counts[keep]
        if (counts < 0).any():
            raise InvalidInput("counts must be nonnegative")
        self.keys = keys
        self.counts = counts
        if reward_sums is None:
            reward_sums = np.zeros((self.n_states, self.n_actions))
        self.reward_sums = np.asarray(reward_sums, dtype=float)
        if self.reward_sums.shape != (self.n_states, self.n_actions):
            raise DimensionMismatch("reward_sums shape mismatch")
        self.pair_counts = np.bincount(
            self.keys // self.n_states, weights=self.counts,
            minlength=self.n_states * self.n_actions,
        ).astype(np.int64).reshape(self.n_states, self.n_actions)

    @classmethod
    def from_arrays(cls, n_states, n_actions, states, actions, next_states, rewards=None):
        s = np.asarray(states, dtype=np.int64)
        a = np.asarray(actions, dtype=np.int64)
        t = np.asarray(next_states, dtype=np.int64)
        if not (s.shape == a.shape == t.shape):
            raise DimensionMismatch("step arrays differ in shape")
        if s.size and (
            s.min() < 0 or s.max() >= n_states or t.min() < 0 or t.max() >= n_states
            or a.min() < 0 or a.max() >= n_actions
        ):
            raise InvalidInput("state or action index out of range")
        pair = s * n_actions + a
        keys, counts = np.unique(pair * n_states + t, return_counts=True)
        sums = np.zeros(n_states * n_actions)
        if rewards is not None:
            sums = np.bincount(pair, weights=np.asarray(rewards, dtype=float),
                               minlength=n_states * n_actions)
        return cls(n_states, n_actions, keys, counts, sums.reshape(n_states, n_actions))

    # -- views --------------------------------------------------------------
    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def triples(self):
        """Yield ``(s, a, s', n)`` in key order."""
        n_s, n_a = self.n_states, self.n_actions
        for k, n in zip(self.keys.tolist(), self.counts.tolist()):
            pair, t = divmod(k, n_s)
            yield pair // n_a, pair % n_a, t, n

    def successor_counts(self, s: int, a: int) -> tuple[np.ndarray, np.ndarray]:
        base = (s * self.n_actions + a) * self.n_states
        lo, hi = np.searchsorted(self.keys, [base, base + self.n_states])
        return self.keys[lo:hi] - base, self.counts[lo:hi]

    def __add__(self, other: "TransitionCounts") -> "TransitionCounts":
        if (self.n_states, self.n_actions) != (other.n_states, other.n_actions):
            raise DimensionMismatch("cannot add counts over different spaces")
        return TransitionCounts(
            self.n_states, self.n_actions,
            np.concatenate([self.keys, other.keys]),
            np.concatenate([self.counts, other.counts]),
            self.reward_sums + other.reward_sums,
        )

    def __eq__(self, other) -> bool:
        # tallies compare exactly; reward sums depend on summation order
        return (
            isinstance(other, TransitionCounts)
            and (self.n_states, self.n_actions) == (other.n_states, other.n_actions)
            and np.array_equal(self.keys, other.keys)
            and np.array_equal(self.counts, other.counts)
            and np.allclose(self.reward_sums, other.reward_sums, rtol=1e-12, atol=1e-12)
        )

    def __repr__(self) -> str:
        return (
            f"TransitionCounts(n_states={self.n_states}, n_actions={self.n_actions}, "
            f"triples={self.keys.size}, total={self.total})"
        )


@dataclass(frozen=True)
class TwoSuccessorCounts:
    """Counts over the chain-extended space built from observed successors."""

    counts: TransitionCounts
    n_main: int
    aux_index: dict = field(default_factory=dict)

    @property
    def tau_action(self) -> int:
        return self.counts.n_actions - 1


@dataclass(frozen=True)
class BootstrapSet:
    """Pairs with too little data; ``mask[s, a]`` marks membership."""

    mask: np.ndarray
    n_wedge: float

    @property
    def members(self) -> set[tuple[int, int]]:
        return {(int(s), int(a)) for s, a in zip(*np.nonzero(self.mask))}

    def __contains__(self, pair) -> bool:
        s, a = pair
        return bool(self.mask[s, a])

    def __len__(self) -> int:
        return int(self.mask.sum())


# -- sampling ---------------------------------------------------------------
def _policy_cdf(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    # Guard against rounding: everything from the last positive entry on is 2.
    last = probs.shape[1] - 1 - np.argmax(probs[:, ::-1] > 0, axis=1)
    cols = np.arange(probs.shape[1])
    cdf[cols[None, :] >= last[:, None]] = 2.0
    return cdf


def _transition_tables(mdp: TabularMdp):
    lengths = np.diff(mdp.pair_ptr)
    width = max(int(lengths.max()), 1)
    n_pairs = lengths.size
    succ = np.zeros((n_pairs, width), dtype=np.int64)
    dens = np.zeros((n_pairs, width))
    col = np.arange(mdp.succ.size) - np.repeat(mdp.pair_ptr[:-1], lengths)
    succ[mdp.entry_pair, col] = mdp.succ
    dens[mdp.entry_pair, col] = mdp.prob
    cdf = np.cumsum(dens, axis=1)
    last = np.maximum(lengths - 1, 0)
    cdf[np.arange(width)[None, :] >= last[:, None]] = 2.0
    return succ, cdf


@dataclass(frozen=True)
class StepBatch:
    """Flat steps plus the offset where each episode starts."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    episode_starts: np.ndarray

    def trajectories(self) -> list[Trajectory]:
        bounds = np.append(self.episode_starts, self.states.size)
        return [
            Trajectory(self.states[lo:hi], self.actions[lo:hi],
                       self.rewards[lo:hi], self.next_states[lo:hi])
            for lo, hi in zip(bounds[:-1].tolist(), bounds[1:].tolist())
        ]

    def counts(self, n_states: int, n_actions: int) -> TransitionCounts:
        return TransitionCounts.from_arrays(
            n_states, n_actions, self.states, self.actions, self.next_states, self.rewards
        )


def sample_steps(
    mdp: TabularMdp,
    pi_b: StochasticPolicy,
    n_steps: int,
    episode_len: int,
    rng_seed,
) -> StepBatch:
    """First ``n_steps`` steps of a stream of i.i.d. episodes from the start state.

    Episodes end after ``episode_len`` steps or on entering an absorbing
    state. Episodes are simulated side by side in batches.
    """
    check_policy(mdp, pi_b)
    if n_steps <= 0 or episode_len <= 0:
        raise InvalidInput("n_steps and episode_len must be positive")
    rng = np.random.default_rng(rng_seed)
    pol_cdf = _policy_cdf(pi_b.probs)
    succ_tab, cdf_tab = _transition_tables(mdp)
    absorbing = mdp.absorbing_mask()
    n_a = mdp.n_actions

    parts: list[tuple[np.ndarray, ...]] = []
    starts: list[np.ndarray] = []
    taken = 0
    mean_len = float(episode_len)
    while taken < n_steps:
        remaining = n_steps - taken
        lanes = int(min(remaining, max(1, math.ceil(1.1 * remaining / mean_len) + 1)))
        s = np.full(lanes, mdp.initial_state, dtype=np.int64)
        alive = np.ones(lanes, dtype=bool)
        rec_s, rec_a, rec_t, rec_alive = [], [], [], []
        for _ in range(episode_len):
            u = rng.random((2, lanes))
            a = (u[0][:, None] < pol_cdf[s]).argmax(axis=1)
            pair = s * n_a + a
            t = succ_tab[pair, (u[1][:, None] < cdf_tab[pair]).argmax(axis=1)]
            rec_s.append(s)
            rec_a.append(a)
            rec_t.append(t)
            rec_alive.append(alive)
            alive = alive & ~absorbing[t]
            s = t
            if not alive.any():
                break
        # lane-major order: each episode's steps are contiguous
        S = np.stack(rec_s, axis=1)
        A = np.stack(rec_a, axis=1)
        T = np.stack(rec_t, axis=1)
        M = np.stack(rec_alive, axis=1)
        lengths = M.sum(axis=1)
        mean_len = max(1.0, float(lengths.mean()))
        ends = np.cumsum(lengths)
        n_full = int(np.searchsorted(ends, remaining, side="right"))
        n_use = min(n_full + 1, lanes)
        flat_s, flat_a, flat_t = S[:n_use][M[:n_use]], A[:n_use][M[:n_use]], T[:n_use][M[:n_use]]
        flat_s, flat_a, flat_t = flat_s[:remaining], flat_a[:remaining], flat_t[:remaining]
        ep_starts = np.concatenate([[0], ends[: n_use - 1]])
        ep_starts = ep_starts[ep_starts < flat_s.size]
        starts.append(ep_starts + taken)
        parts.append((flat_s, flat_a, flat_t))
        taken += flat_s.size

    states = np.concatenate([p[0] for p in parts])
    actions = np.concatenate([p[1] for p in parts])
    next_states = np.concatenate([p[2] for p in parts])
    rewards = mdp.reward[states, actions]
    return StepBatch(states, actions, rewards, next_states, np.concatenate(starts))


def sample_trajectories(
    mdp: TabularMdp,
    pi_b: StochasticPolicy,
    n_steps: int,
    episode_len: int,
    rng_seed,
) -> list[Trajectory]:
    return sample_steps(mdp, pi_b, n_steps, episode_len, rng_seed).trajectories()


def count(trajectories: Iterable[Trajectory], n_states: int, n_actions: int) -> TransitionCounts:
    trajectories = list(trajectories)
    if not trajectories:
        return TransitionCounts(n_states, n_actions)
    cat = lambda name: np.concatenate([getattr(t, name) for t in trajectories])
    return TransitionCounts.from_arrays(
        n_states, n_actions, cat("states"), cat("actions"), cat("next_states"), cat("rewards")
    )


# -- estimation ---------------------------------------------------------------
def _mle_arrays(counts: TransitionCounts, enabled: np.ndarray):
    """CSR rows of the empirical model; unvisited enabled pairs self-loop."""
    n_s, n_a = counts.n_states, counts.n_actions
    pc = counts.pair_counts.ravel()
    en = enabled.ravel()
    if (pc[~en] > 0).any():
        raise InvalidInput("data contain a disabled state-action pair")
    pair_of_key = counts.keys // n_s
    visited = pc > 0
    lengths = np.where(visited, np.bincount(pair_of_key, minlength=n_s * n_a), en.astype(np.int64))
    pair_ptr = np.zeros(n_s * n_a + 1, dtype=np.int64)
    np.cumsum(lengths, out=pair_ptr[1:])
    succ = np.empty(pair_ptr[-1], dtype=np.int64)
    prob = np.empty(pair_ptr[-1])
    # observed entries keep key order, which is (pair, s') ascending
    entry_pair = np.repeat(np.arange(n_s * n_a), lengths)
    obs = visited[entry_pair]
    succ[obs] = counts.keys % n_s
    prob[obs] = counts.counts / pc[pair_of_key]
    loop_pairs = entry_pair[~obs]
    succ[~obs] = loop_pairs // n_a
    prob[~obs] = 1.0
    return pair_ptr, succ, prob, visited.reshape(n_s, n_a)


def build_mle_mdp(
    counts: TransitionCounts,
    template: TabularMdp,
    rewards: str = "known",
) -> TabularMdp:
    """Maximum-likelihood model of ``template``'s dynamics from ``counts``.

    ``rewards="known"`` copies the template's rewards on visited pairs;
    ``"estimated"`` uses the empirical mean reward. Unvisited pairs become
    zero-reward self-loops.
    """
    if (counts.n_states, counts.n_actions) != (template.n_states, template.n_actions):
        raise DimensionMismatch("counts and template disagree on the state/action space")
    pair_ptr, succ, prob, visited = _mle_arrays(counts, template.enabled)
    if rewards == "known":
        reward = np.where(visited, template.reward, 0.0)
    elif rewards == "estimated":
        with np.errstate(invalid="ignore", divide="ignore"):
            reward = np.where(visited, counts.reward_sums / np.maximum(counts.pair_counts, 1), 0.0)
    else:
        raise InvalidInput(f"rewards must be 'known' or 'estimated', got {rewards!r}")
    return TabularMdp.from_csr(
        template.n_states, template.n_actions, pair_ptr, succ, prob, reward,
        initial_state=template.initial_state, discount=template.default_discount,
        r_max=template.r_max, state_discount=template.discount.copy(),
    )


def bootstrap_set(counts, n_wedge: float) -> BootstrapSet:
    """Pairs with ``#D(s, a) <= n_wedge``; chain pairs of 2s counts always belong."""
    if n_wedge < 0 or math.isnan(n_wedge):
        raise InvalidInput("n_wedge must be nonnegative")
    if isinstance(counts, TwoSuccessorCounts):
        mask = counts.counts.pair_counts <= n_wedge
        mask[counts.n_main :, :] = True
    else:
        mask = counts.pair_counts <= n_wedge
    mask.setflags(write=False)
    return BootstrapSet(mask, float(n_wedge))


def transform_dataset(counts: TransitionCounts, order: str = "ascending") -> TwoSuccessorCounts:
    """Re-express counts over chain states built from the observed successors."""
    if order not in ORDERS:
        raise InvalidInput(f"unknown successor order {order!r}")
    n_s, n_a = counts.n_states, counts.n_actions
    tau = n_a
    aux_index: dict[tuple[int, int, int], int] = {}
    triples: list[tuple[int, int, int, int]] = []
    next_id = n_s
    pair_of_key = counts.keys // n_s
    bounds = np.flatnonzero(np.diff(pair_of_key)) + 1
    for keys, cnt in zip(np.split(counts.keys, bounds), np.split(counts.counts, bounds)):
        if keys.size == 0:
            continue
        pair = int(keys[0] // n_s)
        s, a = divmod(pair, n_a)
        succ = (keys % n_s).tolist()
        cnt = cnt.tolist()
        k = len(succ)
        if k <= 2:
            triples += [(s, a, t, c) for t, c in zip(succ, cnt)]
            continue
        suffix = np.cumsum(cnt[::-1])[::-1].tolist()
        ids = list(range(next_id, next_id + k - 2))
        next_id += k - 2
        for j, x in enumerate(ids):
            aux_index[(s, a, j + 2)] = x
        triples.append((s, a, succ[0], cnt[0]))
        triples.append((s, a, ids[0], suffix[1]))
        for j, x in enumerate(ids):
            i = j + 1  # zero-based position of s_{j+2}
            triples.append((x, tau, succ[i], cnt[i]))
            if j + 1 < len(ids):
                triples.append((x, tau, ids[j + 1], suffix[i + 1]))
            else:
                triples.append((x, tau, succ[i + 1], cnt[i + 1]))
    n_total = next_id
    if triples:
        s, a, t, c = (np.asarray(v, dtype=np.int64) for v in zip(*triples))
        keys = (s * (n_a + 1) + a) * n_total + t
    else:
        keys = c = np.zeros(0, dtype=np.int64)
    sums = np.zeros((n_total, n_a + 1))
    sums[:n_s, :n_a] = counts.reward_sums
    out = TransitionCounts(n_total, n_a + 1, keys, c, sums)
    return TwoSuccessorCounts(out, n_s, aux_index)


def build_mle_two_successor(
    c2s: TwoSuccessorCounts,
    template: TabularMdp,
    rewards: str = "known",
) -> TwoSuccessorMdp:
    """MLE model over the chain-extended space of ``c2s``."""
    n_main, n_a = template.n_states, template.n_actions
    if c2s.n_main != n_main or c2s.tau_action != n_a:
        raise DimensionMismatch("2s counts do not match the template")
    cnt = c2s.counts
    n_total = cnt.n_states
    enabled = np.zeros((n_total, n_a + 1), dtype=bool)
    enabled[:n_main, :n_a] = template.enabled
    enabled[n_main:, n_a] = True
    pair_ptr, succ, prob, visited = _mle_arrays(cnt, enabled)
    reward = np.zeros((n_total, n_a + 1))
    if rewards == "known":
        reward[:n_main, :n_a] = np.where(visited[:n_main, :n_a], template.reward, 0.0)
    elif rewards == "estimated":
        reward[:n_main, :n_a] = np.where(
            visited[:n_main, :n_a],
            cnt.reward_sums[:n_main, :n_a] / np.maximum(cnt.pair_counts[:n_main, :n_a], 1),
            0.0,
        )
    else:
        raise InvalidInput(f"rewards must be 'known' or 'estimated', got {rewards!r}")
    gamma = np.ones(n_total)
    gamma[:n_main] = template.default_discount
    mdp = TabularMdp.from_csr(
        n_total, n_a + 1, pair_ptr, succ, prob, reward,
        initial_state=template.initial_state, discount=template.default_discount,
        r_max=template.r_max, state_discount=gamma,
    )
    return TwoSuccessorMdp(mdp, n_main, dict(c2s.aux_index), n_a)
