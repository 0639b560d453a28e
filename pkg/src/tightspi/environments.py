"""Benchmark MDPs and behavior policies.

All constants are parameters of an :class:`EnvSpec` and the shipped spec
files under ``tightspi/envs`` pin the defaults used by the experiments.

Gridworld
    ``size x size`` grid, start in the bottom-left corner, absorbing goal in
    the top-right corner. Moves succeed with ``p_intended`` and slip to each
    lateral direction otherwise; walls reflect. Entering the goal pays 1.
Wet Chicken
    A canoe at ``(x, y)`` on a river of length ``length`` and width
    ``width``. The flow pushes downstream by ``v(y)`` plus uniform integer
    turbulence in ``[-t(y), t(y)]``; going over the waterfall (``x >=
    length``) resets to ``(0, 0)`` and pays nothing, otherwise the reward is
    the new ``x``.
Resource Gathering
    Grid with a home cell, a gold and a gem site, walls and enemy cells.
    Stepping onto a site picks its resource up; leaving home delivers the
    load (reward per item). Enemy cells attack with ``attack_prob``, sending
    the agent home empty-handed with reward ``attack_reward``. Only states
    reachable from home are kept.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import numpy as np

from .errors import InvalidEpsilon, InvalidParameters, UnknownEnv
from .mdp import StochasticPolicy, TabularMdp, greedy_policy

__all__ = [
    "EnvSpec",
    "ENV_NAMES",
    "build_env",
    "load_env_spec",
    "default_v_max",
    "behavior_softmax_q",
    "behavior_perturbed_optimal",
    "softmax_policy",
]

ENV_NAMES = ("gridworld", "wet_chicken", "resource_gathering")

# (dr, dc) for up, right, down, left
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))

DEFAULTS: dict[str, dict[str, str]] = {
    "gridworld": {
        "size": "5",
        "p_intended": "0.75",
        "goal_reward": "1.0",
        "gamma": "0.95",
        "v_max": "1.0",
    },
    "wet_chicken": {
        "length": "5",
        "width": "5",
        "max_velocity": "2",
        "max_turbulence": "2",
        "gamma": "0.95",
    },
    "resource_gathering": {
        "rows": "10",
        "cols": "10",
        "home": "9,0",
        "gold": "0,2",
        "gem": "2,9",
        "enemies": "1,2;2,8",
        "walls": "4,2;4,3;4,4;4,5;4,6",
        "attack_prob": "0.1",
        "attack_reward": "-1.0",
        "item_reward": "1.0",
        "gamma": "0.95",
    },
}


@dataclass(frozen=True)
class EnvSpec:
    """Environment name plus string-valued parameters (missing keys use defaults)."""

    name: str
    params: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in DEFAULTS:
            raise UnknownEnv(self.name)
        unknown = set(self.params) - set(DEFAULTS[self.name])
        if unknown:
            raise InvalidParameters(f"unknown {self.name} parameters: {sorted(unknown)}")

    def resolved(self) -> dict[str, str]:
        out = dict(DEFAULTS[self.name])
        out.update({k: str(v) for k, v in self.params.items()})
        return out

    def get_float(self, key: str) -> float:
        try:
            return float(self.resolved()[key])
        except ValueError as exc:
            raise InvalidParameters(f"{key}: {exc}") from None

    def get_int(self, key: str) -> int:
        v = self.get_float(key)
        if v != int(v):
            raise InvalidParameters(f"{key} must be an integer")
        return int(v)

    def get_cells(self, key: str) -> list[tuple[int, int]]:
        text = self.resolved()[key].strip()
        if not text:
            return []
        try:
            return [tuple(int(v) for v in item.split(",")) for item in text.split(";")]
        except ValueError:
            raise InvalidParameters(f"{key}: expected 'r,c;r,c;...', got {text!r}") from None

    def to_text(self) -> str:
        lines = [f"name = {self.name}"]
        lines += [f"{k} = {v}" for k, v in sorted(self.resolved().items())]
        return "\n".join(lines) + "\n"


def load_env_spec(name_or_path: str) -> EnvSpec:
    """Parse a ``key = value`` spec file, or load a shipped spec by name."""
    if name_or_path in DEFAULTS:
        text = resources.files("tightspi").joinpath(f"envs/{name_or_path}.env").read_text()
    else:
        with open(name_or_path) as fh:
            text = fh.read()
    params: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameters(f"bad spec line: {raw!r}")
        k, v = (part.strip() for part in line.split("=", 1))
        params[k] = v
    name = params.pop("name", None)
    if name is None:
        raise InvalidParameters("spec file lacks a 'name' entry")
    return EnvSpec(name, params)


def default_v_max(spec: EnvSpec, mdp: TabularMdp) -> float:
    if "v_max" in spec.resolved():
        return spec.get_float("v_max")
    return mdp.r_max / (1.0 - mdp.default_discount)


def build_env(spec: EnvSpec) -> TabularMdp:
    builders = {
        "gridworld": _gridworld,
        "wet_chicken": _wet_chicken,
        "resource_gathering": _resource_gathering,
    }
    if spec.name not in builders:
        raise UnknownEnv(spec.name)
    gamma = spec.get_float("gamma")
    if not 0 < gamma < 1:
        raise InvalidParameters("gamma must lie in (0, 1)")
    return builders[spec.name](spec)


def _add(row: dict[int, float], s: int, p: float) -> None:
    row[s] = row.get(s, 0.0) + p


def _gridworld(spec: EnvSpec) -> TabularMdp:
    n = spec.get_int("size")
    p_int = spec.get_float("p_intended")
    goal_r = spec.get_float("goal_reward")
    if n < 2 or not 0 < p_int <= 1:
        raise InvalidParameters("gridworld needs size >= 2 and p_intended in (0, 1]")
    start, goal = (n - 1) * n, n - 1
    p_side = (1.0 - p_int) / 2.0

    def step(s: int, d: int) -> int:
        r, c = divmod(s, n)
        dr, dc = MOVES[d]
        r2, c2 = r + dr, c + dc
        return r2 * n + c2 if 0 <= r2 < n and 0 <= c2 < n else s

    transitions, rewards = {}, {}
    for s in range(n * n):
        for a in range(4):
            if s == goal:
                transitions[(s, a)] = [(s, 1.0)]
                continue
            row: dict[int, float] = {}
            for d, p in ((a, p_int), ((a + 1) % 4, p_side), ((a + 3) % 4, p_side)):
                if p > 0:
                    _add(row, step(s, d), p)
            transitions[(s, a)] = list(row.items())
            rewards[(s, a)] = goal_r * row.get(goal, 0.0)
    return TabularMdp(
        n * n, 4, transitions, rewards, initial_state=start,
        discount=spec.get_float("gamma"), r_max=abs(goal_r),
    )


def _wet_chicken(spec: EnvSpec) -> TabularMdp:
    length, width = spec.get_int("length"), spec.get_int("width")
    v_top, t_top = spec.get_int("max_velocity"), spec.get_int("max_turbulence")
    if length < 2 or width < 2 or v_top < 0 or t_top < 0:
        raise InvalidParameters("wet_chicken needs length, width >= 2 and nonnegative flow")
    # drift, hold, paddle back, right, left
    actions = ((0, 0), (-1, 0), (-2, 0), (0, 1), (0, -1))
    transitions, rewards = {}, {}
    for x in range(length):
        for y in range(width):
            s = x * width + y
            v = (y * v_top) // (width - 1)
            t = max(t_top - v, 0)
            for a, (dx, dy) in enumerate(actions):
                y2 = min(max(y + dy, 0), width - 1)
                row: dict[int, float] = {}
                r = 0.0
                p = 1.0 / (2 * t + 1)
                for noise in range(-t, t + 1):
                    x2 = max(x + dx + v + noise, 0)
                    if x2 >= length:
                        _add(row, 0, p)
                    else:
                        _add(row, x2 * width + y2, p)
                        r += p * x2
                transitions[(s, a)] = list(row.items())
                rewards[(s, a)] = r
    return TabularMdp(
        length * width, len(actions), transitions, rewards, initial_state=0,
        discount=spec.get_float("gamma"), r_max=float(length - 1),
    )


def _resource_gathering(spec: EnvSpec) -> TabularMdp:
    rows, cols = spec.get_int("rows"), spec.get_int("cols")
    (home,), (gold,), (gem,) = spec.get_cells("home"), spec.get_cells("gold"), spec.get_cells("gem")
    enemies = set(spec.get_cells("enemies"))
    walls = set(spec.get_cells("walls"))
    p_att = spec.get_float("attack_prob")
    r_att, r_item = spec.get_float("attack_reward"), spec.get_float("item_reward")
    if not 0 <= p_att <= 1:
        raise InvalidParameters("attack_prob must lie in [0, 1]")
    special = [home, gold, gem, *enemies]
    for cell in special + list(walls):
        if not (0 <= cell[0] < rows and 0 <= cell[1] < cols):
            raise InvalidParameters(f"cell {cell} outside the grid")
    if walls & set(special) or len({home, gold, gem}) < 3 or enemies & {home, gold, gem}:
        raise InvalidParameters("home, gold, gem, enemies and walls must not overlap")

    def outcomes(state):
        """List of ``(probability, next_state, reward)`` per action."""
        pos, g, m = state
        result = []
        for dr, dc in MOVES:
            nxt = (pos[0] + dr, pos[1] + dc)
            if not (0 <= nxt[0] < rows and 0 <= nxt[1] < cols) or nxt in walls:
                nxt = pos
            reward, g2, m2 = 0.0, g, m
            if pos == home and nxt != home:
                reward = r_item * (g + m)
                g2 = m2 = 0
            if nxt == gold:
                g2 = 1
            if nxt == gem:
                m2 = 1
            if nxt in enemies and p_att > 0:
                outs = [(p_att, (home, 0, 0), reward + r_att)]
                if p_att < 1:
                    outs.append((1 - p_att, (nxt, g2, m2), reward))
            else:
                outs = [(1.0, (nxt, g2, m2), reward)]
            result.append(outs)
        return result

    start = (home, 0, 0)
    index = {start: 0}
    order = [start]
    queue = deque([start])
    table = {}
    while queue:
        st = queue.popleft()
        table[st] = outcomes(st)
        for outs in table[st]:
            for _, nxt, _ in outs:
                if nxt not in index:
                    index[nxt] = len(order)
                    order.append(nxt)
                    queue.append(nxt)
    # canonical numbering: by (row, col, gold, gem)
    canon = sorted(order, key=lambda st: (st[0][0], st[0][1], st[1], st[2]))
    ids = {st: i for i, st in enumerate(canon)}
    transitions, rewards = {}, {}
    r_max = 0.0
    for st in canon:
        s = ids[st]
        for a, outs in enumerate(table[st]):
            row: dict[int, float] = {}
            r = 0.0
            for p, nxt, rew in outs:
                _add(row, ids[nxt], p)
                r += p * rew
                r_max = max(r_max, abs(rew))
            transitions[(s, a)] = list(row.items())
            rewards[(s, a)] = r
    return TabularMdp(
        len(canon), 4, transitions, rewards, initial_state=ids[start],
        discount=spec.get_float("gamma"), r_max=r_max or 1.0,
    )


# -- behavior policies ---------------------------------------------------------------
def softmax_policy(mdp: TabularMdp, Q: np.ndarray, temp: float) -> StochasticPolicy:
    """``softmax(Q / temp)`` over enabled actions."""
    if not temp > 0:
        raise InvalidParameters("temperature must be positive")
    z = np.where(mdp.enabled, np.asarray(Q, dtype=float) / temp, -np.inf)
    z -= z.max(axis=1, keepdims=True)
    w = np.where(mdp.enabled, np.exp(z), 0.0)
    return StochasticPolicy(w / w.sum(axis=1, keepdims=True))


def behavior_softmax_q(
    mdp: TabularMdp,
    q_steps: int = 20000,
    lr: float = 0.1,
    temp: float = 0.1,
    rng_seed: int = 0,
    episode_len: int = 200,
) -> StochasticPolicy:
    """Tabular Q-learning with softmax exploration, returned as ``softmax(Q/temp)``."""
    if q_steps < 0 or not lr > 0 or not temp > 0 or episode_len < 1:
        raise InvalidParameters("Q-learning hyperparameters must be positive")
    rng = np.random.default_rng(rng_seed)
    n_a = mdp.n_actions
    Q = np.zeros((mdp.n_states, n_a))
    absorbing = mdp.absorbing_mask()
    gamma = mdp.discount
    en = mdp.enabled
    ptr, succ, prob = mdp.pair_ptr, mdp.succ, mdp.prob
    s, t_ep = mdp.initial_state, 0
    u = rng.random((q_steps, 2))
    for i in range(q_steps):
        z = np.where(en[s], Q[s] / temp, -np.inf)
        z = np.exp(z - z.max())
        cdf = np.cumsum(z / z.sum())
        a = min(int(np.searchsorted(cdf, u[i, 0], side="right")), n_a - 1)
        while not en[s, a]:
            a -= 1
        k = s * n_a + a
        lo, hi = ptr[k], ptr[k + 1]
        j = min(int(np.searchsorted(np.cumsum(prob[lo:hi]), u[i, 1], side="right")), hi - lo - 1)
        s2 = int(succ[lo + j])
        target = mdp.reward[s, a] + gamma[s] * np.max(np.where(en[s2], Q[s2], -np.inf))
        Q[s, a] += lr * (target - Q[s, a])
        t_ep += 1
        if absorbing[s2] or t_ep >= episode_len:
            s, t_ep = mdp.initial_state, 0
        else:
            s = s2
    return softmax_policy(mdp, Q, temp)


def behavior_perturbed_optimal(mdp: TabularMdp, epsilon: float = 1e-5) -> StochasticPolicy:
    """Optimal action with ``1 - epsilon * (#other enabled)``, every other enabled action ``epsilon``."""
    if epsilon < 0 or not epsilon * (mdp.n_actions - 1) < 1 or math.isnan(epsilon):
        raise InvalidEpsilon(f"epsilon={epsilon} outside [0, 1/(|A|-1))")
    best = greedy_policy(mdp).greedy_actions()
    probs = np.where(mdp.enabled, epsilon, 0.0)
    n_other = mdp.enabled.sum(axis=1) - 1
    rows = np.arange(mdp.n_states)
    probs[rows, best] = 1.0 - epsilon * n_other
    # nudge the optimal mass by ulps until each row sums to exactly 1 in floats
    for _ in range(8):
        err = probs.sum(axis=1) - 1.0
        if not err.any():
            break
        probs[rows, best] = np.where(
            err > 0, np.nextafter(probs[rows, best], 0.0),
            np.where(err < 0, np.nextafter(probs[rows, best], 2.0), probs[rows, best]),
        )
    return StochasticPolicy(probs)
