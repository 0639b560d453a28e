"""Repeated-dataset benchmark runs: sampling, learning, scoring, reporting.

For every ``(dataset_size, run)`` one dataset is drawn with a seed derived
from ``(base_seed, size, run)``, so any subset of runs can be recomputed in
any order or process and reproduces the same numbers.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import formats
from .bounds import BoundParams, convert_nmin
from .data import bootstrap_set, build_mle_mdp, sample_steps
from .environments import (
    EnvSpec,
    behavior_perturbed_optimal,
    behavior_softmax_q,
    build_env,
    default_v_max,
    load_env_spec,
)
from .errors import EmptyInput, InvalidInput, TightSpiError
from .mdp import StochasticPolicy, TabularMdp, evaluate_policy, greedy_policy
from .spibb import SpibbProblem, basic_rl_policy, spibb_policy

__all__ = [
    "METHODS",
    "BehaviorSpec",
    "ExperimentConfig",
    "RunResult",
    "SummaryRow",
    "load_config",
    "run_seed",
    "prepare",
    "run_experiment",
    "cvar",
    "aggregate",
    "emit_outputs",
    "read_raw",
    "read_summary",
    "render_svg",
]

METHODS = ("basic_rl", "spibb", "spibb_2s", "spibb_beta", "behavior", "optimal")
LEARNERS = ("basic_rl", "spibb", "spibb_2s", "spibb_beta")
RAW_HEADER = ["env", "method", "n_wedge", "dataset_size", "run", "seed", "status", "perf"]
SUMMARY_HEADER = ["env", "method", "dataset_size", "mean", "cvar10", "cvar1", "n_runs"]
DEFAULT_SIZES = (10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000, 20000, 50000, 100000)


@dataclass(frozen=True)
class BehaviorSpec:
    """How the behavior policy is obtained: ``softmax_q``, ``perturbed_optimal`` or ``file``."""

    kind: str = "softmax_q"
    q_steps: int = 20000
    lr: float = 0.1
    temp: float = 0.1
    seed: int = 0
    epsilon: float = 1e-5
    path: str = ""

    def build(self, mdp: TabularMdp) -> StochasticPolicy:
        if self.kind == "softmax_q":
            return behavior_softmax_q(mdp, self.q_steps, self.lr, self.temp, self.seed)
        if self.kind == "perturbed_optimal":
            return behavior_perturbed_optimal(mdp, self.epsilon)
        if self.kind == "file":
            return formats.read_policy(self.path, mdp.n_states, mdp.n_actions)
        raise InvalidInput(f"unknown behavior kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvSpec
    behavior: BehaviorSpec = field(default_factory=BehaviorSpec)
    methods: tuple[str, ...] = METHODS
    n_spibb: int = 100
    delta: float = 0.1
    dataset_sizes: tuple[int, ...] = DEFAULT_SIZES
    repeats: int = 1000
    base_seed: int = 0
    episode_len: int = 200
    out_dir: str = "results"

    def __post_init__(self):
        if self.repeats < 1:
            raise InvalidInput("repeats must be at least 1")
        sizes = list(self.dataset_sizes)
        if not sizes or min(sizes) < 1 or sizes != sorted(set(sizes)):
            raise InvalidInput("dataset_sizes must be positive and strictly ascending")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise InvalidInput(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if self.n_spibb < 1 or not 0 < self.delta < 1 or self.episode_len < 1:
            raise InvalidInput("n_spibb >= 1, delta in (0, 1) and episode_len >= 1 required")


@dataclass(frozen=True)
class RunResult:
    env: str
    method: str
    n_wedge: float
    dataset_size: int
    run: int
    seed: int
    status: str
    perf: float


@dataclass(frozen=True)
class SummaryRow:
    env: str
    method: str
    dataset_size: int
    mean: float
    cvar10: float
    cvar1: float
    n_runs: int


# -- configuration -----------------------------------------------------------------
def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def load_config(path: str) -> ExperimentConfig:
    """Read an INI file with ``[experiment]``, ``[env]`` and ``[behavior]`` sections."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        cp.read_file(fh)
    if "experiment" not in cp or "env" not in cp:
        raise InvalidInput("config needs [experiment] and [env] sections")
    env_sec = dict(cp["env"])
    name = env_sec.pop("name", None)
    spec_file = env_sec.pop("spec", None)
    if spec_file:
        base = os.path.dirname(os.path.abspath(path))
        spec = load_env_spec(os.path.join(base, spec_file))
        spec = EnvSpec(spec.name, {**spec.params, **env_sec})
    elif name:
        spec = EnvSpec(name, env_sec)
    else:
        raise InvalidInput("[env] needs 'name' or 'spec'")
    beh = BehaviorSpec()
    if "behavior" in cp:
        b = cp["behavior"]
        path_val = b.get("path", "")
        if path_val and not os.path.isabs(path_val):
            path_val = os.path.join(os.path.dirname(os.path.abspath(path)), path_val)
        beh = BehaviorSpec(
            kind=b.get("kind", beh.kind),
            q_steps=b.getint("q_steps", beh.q_steps),
            lr=b.getfloat("lr", beh.lr),
            temp=b.getfloat("temp", beh.temp),
            seed=b.getint("seed", beh.seed),
            epsilon=b.getfloat("epsilon", beh.epsilon),
            path=path_val,
        )
    e = cp["experiment"]
    methods = tuple(m.strip() for m in e.get("methods", ",".join(METHODS)).split(",") if m.strip())
    return ExperimentConfig(
        env=spec,
        behavior=beh,
        methods=methods,
        n_spibb=e.getint("n_spibb", 100),
        delta=e.getfloat("delta", 0.1),
        dataset_sizes=_ints(e.get("dataset_sizes", " ".join(map(str, DEFAULT_SIZES)))),
        repeats=e.getint("repeats", 1000),
        base_seed=e.getint("base_seed", 0),
        episode_len=e.getint("episode_len", 200),
        out_dir=e.get("out_dir", "results"),
    )


def run_seed(base_seed: int, size: int, run: int) -> int:
    """Stable 64-bit seed for one dataset."""
    ss = np.random.SeedSequence([int(base_seed), int(size), int(run)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# -- running -----------------------------------------------------------------------
@dataclass(frozen=True)
class _Setup:
    env_name: str
    mdp: TabularMdp
    pi_b: StochasticPolicy
    methods: tuple[str, ...]
    thresholds: dict
    episode_len: int
    base_seed: int
    behavior_perf: float
    optimal_perf: float


_WORKER_SETUP: _Setup | None = None


def _init_worker(setup: _Setup) -> None:
    global _WORKER_SETUP
    _WORKER_SETUP = setup


def prepare(cfg: ExperimentConfig) -> _Setup:
    mdp = build_env(cfg.env)
    pi_b = cfg.behavior.build(mdp)
    params = BoundParams(
        mdp.n_states, mdp.n_actions, default_v_max(cfg.env, mdp), mdp.default_discount, cfg.delta
    )
    thresholds = {
        "basic_rl": math.nan,
        "spibb": cfg.n_spibb,
        "spibb_2s": convert_nmin(params, cfg.n_spibb, "2s"),
        "spibb_beta": convert_nmin(params, cfg.n_spibb, "beta"),
        "behavior": math.nan,
        "optimal": math.nan,
    }
    s0 = mdp.initial_state
    return _Setup(
        env_name=cfg.env.name,
        mdp=mdp,
        pi_b=pi_b,
        methods=tuple(cfg.methods),
        thresholds=thresholds,
        episode_len=cfg.episode_len,
        base_seed=cfg.base_seed,
        behavior_perf=float(evaluate_policy(mdp, pi_b)[s0]),
        optimal_perf=float(evaluate_policy(mdp, greedy_policy(mdp))[s0]),
    )


def _learn(setup: _Setup, mle: TabularMdp, counts, method: str) -> StochasticPolicy:
    if method == "basic_rl":
        return basic_rl_policy(mle)
    u = bootstrap_set(counts, setup.thresholds[method])
    return spibb_policy(SpibbProblem(mle, setup.pi_b, u))


def _one_dataset(setup: _Setup, size: int, run: int) -> list[RunResult]:
    seed = run_seed(setup.base_seed, size, run)
    mdp, s0 = setup.mdp, setup.mdp.initial_state
    out = []
    learners = [m for m in setup.methods if m in LEARNERS]
    mle = counts = None
    err = ""
    if learners:
        try:
            batch = sample_steps(mdp, setup.pi_b, size, setup.episode_len, seed)
            counts = batch.counts(mdp.n_states, mdp.n_actions)
            mle = build_mle_mdp(counts, mdp)
        except TightSpiError as exc:
            err = f"failed:{type(exc).__name__}"
    for method in setup.methods:
        n_wedge = float(setup.thresholds[method])
        if method == "behavior":
            perf, status = setup.behavior_perf, "ok"
        elif method == "optimal":
            perf, status = setup.optimal_perf, "ok"
        elif err:
            perf, status = math.nan, err
        else:
            try:
                pi = _learn(setup, mle, counts, method)
                perf, status = float(evaluate_policy(mdp, pi)[s0]), "ok"
            except TightSpiError as exc:
                perf, status = math.nan, f"failed:{type(exc).__name__}"
        out.append(RunResult(setup.env_name, method, n_wedge, size, run, seed, status, perf))
    return out


def _run_chunk(tasks: Sequence[tuple[int, int]]) -> list[RunResult]:
    assert _WORKER_SETUP is not None
    out = []
    for size, run in tasks:
        out.extend(_one_dataset(_WORKER_SETUP, size, run))
    return out


def _sort_key(r: RunResult):
    return (METHODS.index(r.method), r.dataset_size, r.run)


def run_experiment(cfg: ExperimentConfig, workers: int = 1, setup: _Setup | None = None) -> list[RunResult]:
    """All runs of ``cfg``, sorted by (method, size, run)."""
    setup = setup or prepare(cfg)
    tasks = [(size, run) for size in cfg.dataset_sizes for run in range(cfg.repeats)]
    if workers <= 1:
        _init_worker(setup)
        results = _run_chunk(tasks)
    else:
        n_chunks = workers * 8
        chunks = [tasks[i::n_chunks] for i in range(n_chunks)]
        results = []
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(setup,)) as ex:
            for part in ex.map(_run_chunk, chunks):
                results.extend(part)
    return sorted(results, key=_sort_key)


# -- statistics -------------------------------------------------------------------
def cvar(values: Iterable[float], alpha: float) -> float:
    """Mean of the ``ceil(alpha * n)`` smallest values."""
    v = np.sort(np.asarray(list(values), dtype=float))
    if v.size == 0:
        raise EmptyInput("cvar of an empty list")
    if not 0 < alpha <= 1:
        raise InvalidInput(f"alpha={alpha} outside (0, 1]")
    k = max(1, math.ceil(round(alpha * v.size, 9)))
    return float(v[:k].mean())


def aggregate(results: Iterable[RunResult]) -> list[SummaryRow]:
    groups: dict[tuple[str, str, int], list[float]] = {}
    for r in results:
        if r.status != "ok":
            continue
        groups.setdefault((r.env, r.method, r.dataset_size), []).append(r.perf)
    rows = []
    for (env, method, size), vals in groups.items():
        rows.append(SummaryRow(
            env, method, size, float(np.mean(vals)), cvar(vals, 0.1), cvar(vals, 0.01), len(vals)
        ))
    order = {m: i for i, m in enumerate(METHODS)}
    return sorted(rows, key=lambda r: (r.env, order.get(r.method, len(order)), r.method, r.dataset_size))


# -- output -----------------------------------------------------------------------
def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def _write_csv(path: str, header: list[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def emit_outputs(
    summary: Sequence[SummaryRow],
    raw: Sequence[RunResult],
    out_dir: str,
) -> list[str]:
    """Write ``raw.csv``, ``summary.csv`` and one ``<env>.svg`` per environment."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, "raw.csv"), os.path.join(out_dir, "summary.csv")]
    _write_csv(paths[0], RAW_HEADER, (
        (r.env, r.method, r.n_wedge, r.dataset_size, r.run, r.seed, r.status, r.perf) for r in raw
    ))
    _write_csv(paths[1], SUMMARY_HEADER, (
        (s.env, s.method, s.dataset_size, s.mean, s.cvar10, s.cvar1, s.n_runs) for s in summary
    ))
    for env in sorted({s.env for s in summary}):
        p = os.path.join(out_dir, f"{env}.svg")
        with open(p, "w") as fh:
            fh.write(render_svg([s for s in summary if s.env == env], env))
        paths.append(p)
    return paths


def read_raw(path: str) -> list[RunResult]:
    with open(path, newline="") as fh:
        return [
            RunResult(
                row["env"], row["method"], float(row["n_wedge"]), int(row["dataset_size"]),
                int(row["run"]), int(row["seed"]), row["status"], float(row["perf"]),
            )
            for row in csv.DictReader(fh)
        ]


def read_summary(path: str) -> list[SummaryRow]:
    with open(path, newline="") as fh:
        return [
            SummaryRow(
                row["env"], row["method"], int(row["dataset_size"]), float(row["mean"]),
                float(row["cvar10"]), float(row["cvar1"]), int(row["n_runs"]),
            )
            for row in csv.DictReader(fh)
        ]


PALETTE = {
    "basic_rl": "#d62728",
    "spibb": "#1f77b4",
    "spibb_2s": "#2ca02c",
    "spibb_beta": "#9467bd",
}
REFERENCE = {"behavior": "#7f7f7f", "optimal": "#000000"}


def render_svg(rows: Sequence[SummaryRow], title: str = "") -> str:
    """Three panels (mean, 10% CVaR, 1% CVaR) against dataset size on a log axis."""
    panels = (("mean", "mean"), ("cvar10", "CVaR 10%"), ("cvar1", "CVaR 1%"))
    pw, ph, margin, top = 300, 220, 50, 40
    width, height = len(panels) * (pw + margin) + margin, ph + top + 90
    curves = sorted({r.method for r in rows if r.method not in REFERENCE}, key=_method_order)
    refs = {r.method: r.mean for r in rows if r.method in REFERENCE}
    sizes = sorted({r.dataset_size for r in rows}) or [1]
    values = [getattr(r, k) for r in rows for k, _ in panels if r.method not in REFERENCE]
    values += list(refs.values())
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    xl, xh = math.log10(sizes[0]), math.log10(sizes[-1])
    if xh - xl < 1e-12:
        xl, xh = xl - 0.5, xh + 0.5

    def X(i, size):
        return margin + i * (pw + margin) + (math.log10(size) - xl) / (xh - xl) * pw

    def Y(v):
        return top + (hi - v) / (hi - lo) * ph

    out = io.StringIO()
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
    )
    out.write(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>\n')
    for i, (key, label) in enumerate(panels):
        x0 = margin + i * (pw + margin)
        out.write(
            f'<rect class="frame" x="{x0}" y="{top}" width="{pw}" height="{ph}" '
            f'fill="none" stroke="#444"/>\n'
        )
        out.write(f'<text x="{x0 + pw / 2:.1f}" y="{top - 8}" text-anchor="middle">{label}</text>\n')
        for s in sizes:
            out.write(
                f'<text x="{X(i, s):.1f}" y="{top + ph + 14}" text-anchor="middle">{s}</text>\n'
            )
        for frac in (0.0, 0.5, 1.0):
            v = lo + frac * (hi - lo)
            out.write(f'<text x="{x0 - 4}" y="{Y(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>\n')
        for name, v in sorted(refs.items()):
            out.write(
                f'<line class="ref {name}" x1="{x0}" x2="{x0 + pw}" y1="{Y(v):.2f}" '
                f'y2="{Y(v):.2f}" stroke="{REFERENCE[name]}" stroke-dasharray="4 3"/>\n'
            )
        for name in curves:
            pts = sorted((r.dataset_size, getattr(r, key)) for r in rows if r.method == name)
            d = " ".join(
                f"{'M' if j == 0 else 'L'}{X(i, s):.2f},{Y(v):.2f}" for j, (s, v) in enumerate(pts)
            )
            color = PALETTE.get(name, "#ff7f0e")
            out.write(
                f'<path class="curve {name}" d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>\n'
            )
    # legend
    entries = curves + sorted(refs)
    for j, name in enumerate(entries):
        lx, ly = margin + j * 130, height - 25
        color = PALETTE.get(name, REFERENCE.get(name, "#ff7f0e"))
        out.write(f'<rect x="{lx}" y="{ly - 9}" width="12" height="3" fill="{color}"/>\n')
        out.write(f'<text x="{lx + 16}" y="{ly - 4}">{name}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()


def _method_order(name: str):
    return (METHODS.index(name) if name in METHODS else len(METHODS), name)
