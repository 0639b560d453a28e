"""Plain-text formats for MDPs, policies, trajectories and counts.

MDP files::

    mdp <n_states> <n_actions> <initial> <gamma> <r_max>
    t <s> <a> <s'> <prob>
    r <s> <a> <reward>
    g <s> <gamma_s>

Auxiliary-state sidecar: ``aux <x> <s> <a> <i>``. Policies: ``p <s> <a> <prob>``.
Counts: ``c <s> <a> <s'> <n>``. Trajectories: ``s a r s'`` per line with a
blank line between episodes. ``#`` starts a comment everywhere.
Floats are written with ``repr`` so files round-trip exactly.
"""
from __future__ import annotations

from typing import Iterable, TextIO

import numpy as np

from .data import TransitionCounts, Trajectory
from .errors import InvalidInput
from .mdp import StochasticPolicy, TabularMdp
from .two_successor import TwoSuccessorMdp

__all__ = [
    "write_mdp",
    "read_mdp",
    "dump_mdp",
    "parse_mdp",
    "write_aux",
    "read_aux",
    "write_policy",
    "read_policy",
    "write_trajectories",
    "read_trajectories",
    "write_counts",
    "read_counts",
]


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


def _open_text(path_or_text: str) -> str:
    with open(path_or_text) as fh:
        return fh.read()


# -- MDP ---------------------------------------------------------------------------
def dump_mdp(mdp: TabularMdp) -> str:
    out = [
        f"mdp {mdp.n_states} {mdp.n_actions} {mdp.initial_state} "
        f"{mdp.default_discount!r} {mdp.r_max!r}"
    ]
    for s, a, succ, prob in mdp.rows():
        out += [f"t {s} {a} {t} {p!r}" for t, p in zip(succ.tolist(), prob.tolist())]
    for s, a in zip(*np.nonzero(mdp.enabled)):
        out.append(f"r {s} {a} {float(mdp.reward[s, a])!r}")
    for s in np.flatnonzero(mdp.discount != mdp.default_discount):
        out.append(f"g {s} {float(mdp.discount[s])!r}")
    return "\n".join(out) + "\n"


def parse_mdp(text: str) -> TabularMdp:
    header = None
    transitions: dict[tuple[int, int], list[tuple[int, float]]] = {}
    rewards: dict[tuple[int, int], float] = {}
    gammas: dict[int, float] = {}
    try:
        for no, tok in _lines(text):
            kind = tok[0]
            if kind == "mdp" and len(tok) == 6:
                header = (int(tok[1]), int(tok[2]), int(tok[3]), float(tok[4]), float(tok[5]))
            elif kind == "t" and len(tok) == 5:
                transitions.setdefault((int(tok[1]), int(tok[2])), []).append(
                    (int(tok[3]), float(tok[4]))
                )
            elif kind == "r" and len(tok) == 4:
                rewards[(int(tok[1]), int(tok[2]))] = float(tok[3])
            elif kind == "g" and len(tok) == 3:
                gammas[int(tok[1])] = float(tok[2])
            else:
                raise InvalidInput(f"line {no}: unrecognized record {' '.join(tok)!r}")
    except ValueError as exc:
        raise InvalidInput(f"malformed MDP file: {exc}") from None
    if header is None:
        raise InvalidInput("missing 'mdp' header line")
    n_s, n_a, init, gamma, r_max = header
    state_discount = None
    if gammas:
        state_discount = np.full(n_s, gamma)
        for s, g in gammas.items():
            if not 0 <= s < n_s:
                raise InvalidInput(f"discount override for state {s} out of range")
            state_discount[s] = g
    return TabularMdp(
        n_s, n_a, transitions, rewards, initial_state=init, discount=gamma,
        r_max=r_max, state_discount=state_discount,
    )


def write_mdp(path: str, mdp: TabularMdp) -> None:
    with open(path, "w") as fh:
        fh.write(dump_mdp(mdp))


def read_mdp(path: str) -> TabularMdp:
    return parse_mdp(_open_text(path))


# -- auxiliary sidecar -----------------------------------------------------------------
def write_aux(path: str, t: TwoSuccessorMdp) -> None:
    with open(path, "w") as fh:
        for x, s, a, i in t.aux_records():
            fh.write(f"aux {x} {s} {a} {i}\n")


def read_aux(path: str) -> dict[tuple[int, int, int], int]:
    out = {}
    for no, tok in _lines(_open_text(path)):
        if tok[0] != "aux" or len(tok) != 5:
            raise InvalidInput(f"line {no}: expected 'aux <x> <s> <a> <i>'")
        x, s, a, i = map(int, tok[1:])
        out[(s, a, i)] = x
    return out


# -- policies --------------------------------------------------------------------------
def write_policy(path: str, pi: StochasticPolicy) -> None:
    with open(path, "w") as fh:
        fh.write(f"# policy {pi.n_states} {pi.n_actions}\n")
        for s, a in zip(*np.nonzero(pi.probs)):
            fh.write(f"p {s} {a} {float(pi.probs[s, a])!r}\n")


def read_policy(path: str, n_states: int, n_actions: int) -> StochasticPolicy:
    probs = np.zeros((n_states, n_actions))
    for no, tok in _lines(_open_text(path)):
        if tok[0] != "p" or len(tok) != 4:
            raise InvalidInput(f"line {no}: expected 'p <s> <a> <prob>'")
        s, a = int(tok[1]), int(tok[2])
        if not (0 <= s < n_states and 0 <= a < n_actions):
            raise InvalidInput(f"line {no}: pair ({s}, {a}) out of range")
        probs[s, a] = float(tok[3])
    return StochasticPolicy(probs)


# -- trajectories ----------------------------------------------------------------------
def write_trajectories(fh: TextIO, trajectories: Iterable[Trajectory]) -> None:
    first = True
    for traj in trajectories:
        if not first:
            fh.write("\n")
        first = False
        for s, a, r, t in traj.steps:
            fh.write(f"{s} {a} {r!r} {t}\n")


def read_trajectories(fh: TextIO) -> list[Trajectory]:
    episodes: list[list[tuple]] = [[]]
    for raw in fh:
        line = raw.split("#", 1)[0].strip()
        if not raw.strip():
            if episodes[-1]:
                episodes.append([])
            continue
        if not line:
            continue
        tok = line.split()
        if len(tok) != 4:
            raise InvalidInput(f"expected 's a r s'' step, got {line!r}")
        episodes[-1].append((int(tok[0]), int(tok[1]), float(tok[2]), int(tok[3])))
    return [Trajectory.from_steps(ep) for ep in episodes if ep]


# -- counts ----------------------------------------------------------------------------
def write_counts(path: str, counts: TransitionCounts) -> None:
    with open(path, "w") as fh:
        fh.write(f"# counts {counts.n_states} {counts.n_actions}\n")
        for s, a, t, n in counts.triples():
            fh.write(f"c {s} {a} {t} {n}\n")


def read_counts(path: str, n_states: int, n_actions: int) -> TransitionCounts:
    s_l, a_l, t_l, n_l = [], [], [], []
    for no, tok in _lines(_open_text(path)):
        if tok[0] != "c" or len(tok) != 5:
            raise InvalidInput(f"line {no}: expected 'c <s> <a> <s'> <n>'")
        s, a, t, n = map(int, tok[1:])
        if not (0 <= s < n_states and 0 <= t < n_states and 0 <= a < n_actions):
            raise InvalidInput(f"line {no}: index out of range")
        s_l.append(s), a_l.append(a), t_l.append(t), n_l.append(n)
    keys = (np.asarray(s_l, dtype=np.int64) * n_actions + np.asarray(a_l, dtype=np.int64)) * n_states
    keys = keys + np.asarray(t_l, dtype=np.int64)
    return TransitionCounts(n_states, n_actions, keys, n_l)
