"""Command-line entry point ``tightspi``."""
from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import formats
from .bounds import BoundParams, all_nmin, convert_nmin
from .environments import build_env, load_env_spec
from .errors import TightSpiError
from .experiment import (
    BehaviorSpec,
    aggregate,
    emit_outputs,
    load_config,
    read_summary,
    render_svg,
    run_experiment,
)
from .mdp import StochasticPolicy, TabularMdp
from .two_successor import transform_mdp, verify_preservation


def _sweep(text: str) -> range:
    try:
        lo, hi, step = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo:hi:step") from None
    if lo < 1 or hi < lo or step < 1:
        raise argparse.ArgumentTypeError("need 1 <= lo <= hi and step >= 1")
    return range(lo, hi + 1, step)


def _cmd_bounds(args) -> int:
    w = csv.writer(sys.stdout, lineterminator="\n")
    base = dict(v_max=args.vmax, gamma=args.gamma, delta=args.delta, rho_tilde=args.rho_tilde)
    if args.sweep_states is not None:
        w.writerow(["states", "n_spi", "n_spibb", "n_2s", "n_beta"])
        for s in args.sweep_states:
            row = all_nmin(BoundParams(s, args.actions, **base), args.zeta)
            w.writerow([s, row["n_spi"], row["n_spibb"], row["n_2s"], row["n_beta"]])
        return 0
    p = BoundParams(args.states, args.actions, **base)
    if args.zeta is not None:
        row = all_nmin(p, args.zeta)
        w.writerow(["n_spi", "n_spibb", "n_2s", "n_beta"])
        w.writerow([row["n_spi"], row["n_spibb"], row["n_2s"], row["n_beta"]])
    else:
        w.writerow(["n_spibb", "n_2s", "n_beta"])
        w.writerow([args.n_spibb, convert_nmin(p, args.n_spibb, "2s"), convert_nmin(p, args.n_spibb, "beta")])
    return 0


def _cmd_experiment_run(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out_dir or cfg.out_dir
    if not os.path.isabs(out_dir) and args.out_dir is None:
        out_dir = os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(args.config)), out_dir))
    raw = run_experiment(cfg, workers=args.workers)
    summary = aggregate(raw)
    paths = emit_outputs(summary, raw, out_dir)
    failed = sum(r.status != "ok" for r in raw)
    for p in paths:
        print(p)
    if failed:
        print(f"{failed} runs failed", file=sys.stderr)
        return 1
    return 0


def _cmd_experiment_plot(args) -> int:
    rows = read_summary(args.input)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.input))
    os.makedirs(out_dir, exist_ok=True)
    for env in sorted({r.env for r in rows}):
        path = os.path.join(out_dir, f"{env}.svg")
        with open(path, "w") as fh:
            fh.write(render_svg([r for r in rows if r.env == env], env))
        print(path)
    return 0


def _random_policy(mdp: TabularMdp, rng: np.random.Generator) -> StochasticPolicy:
    w = np.where(mdp.enabled, rng.random(mdp.enabled.shape), 0.0)
    w[~w.any(axis=1)] = mdp.enabled[~w.any(axis=1)]
    return StochasticPolicy(w / w.sum(axis=1, keepdims=True))


def _cmd_transform_verify(args) -> int:
    mdp = formats.read_mdp(args.mdp)
    t = transform_mdp(mdp)
    policies = [StochasticPolicy.uniform(mdp)]
    rng = np.random.default_rng(args.seed)
    policies += [_random_policy(mdp, rng) for _ in range(args.seed_random)]
    ok = True
    print("policy,max_prob_gap,perf_gap,passed")
    for i, pi in enumerate(policies):
        rep = verify_preservation(mdp, t, pi, args.tol)
        ok &= rep.passed
        name = "uniform" if i == 0 else f"random{i}"
        print(f"{name},{rep.max_prob_gap!r},{rep.perf_gap!r},{rep.passed}")
    if args.out:
        formats.write_mdp(args.out, t.mdp)
        formats.write_aux(args.out + ".aux", t)
    return 0 if ok else 1


def _cmd_env_build(args) -> int:
    spec = load_env_spec(args.name)
    mdp = build_env(spec)
    formats.write_mdp(args.out, mdp)
    if args.behavior_out:
        beh = BehaviorSpec(kind=args.behavior, temp=args.temp, seed=args.seed)
        formats.write_policy(args.behavior_out, beh.build(mdp))
    print(f"{spec.name}: {mdp.n_states} states, {mdp.n_actions} actions -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tightspi", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="sample-size thresholds and conversions")
    b.add_argument("--states", type=int, default=None)
    b.add_argument("--actions", type=int, required=True)
    b.add_argument("--vmax", type=float, default=1.0)
    b.add_argument("--gamma", type=float, default=0.95)
    b.add_argument("--delta", type=float, default=0.1)
    b.add_argument("--rho-tilde", type=float, default=0.0)
    mode = b.add_mutually_exclusive_group(required=True)
    mode.add_argument("--zeta", type=float, help="emit every threshold for this loss")
    mode.add_argument("--n-spibb", type=int, help="convert an SPIBB threshold")
    b.add_argument("--sweep-states", type=_sweep, help="lo:hi:step CSV sweep (needs --zeta)")
    b.set_defaults(func=_cmd_bounds)

    e = sub.add_parser("experiment", help="run or plot benchmark experiments")
    esub = e.add_subparsers(dest="action", required=True)
    er = esub.add_parser("run")
    er.add_argument("--config", required=True)
    er.add_argument("--workers", type=int, default=1)
    er.add_argument("--out-dir", default=None)
    er.set_defaults(func=_cmd_experiment_run)
    ep = esub.add_parser("plot")
    ep.add_argument("--in", dest="input", required=True)
    ep.add_argument("--out", default=None)
    ep.set_defaults(func=_cmd_experiment_plot)

    t = sub.add_parser("transform", help="two-successor transformation")
    tsub = t.add_subparsers(dest="action", required=True)
    tv = tsub.add_parser("verify")
    tv.add_argument("--mdp", required=True)
    tv.add_argument("--seed-random", type=int, default=0, help="also check n random policies")
    tv.add_argument("--seed", type=int, default=0)
    tv.add_argument("--tol", type=float, default=1e-8)
    tv.add_argument("--out", default=None, help="write the transformed MDP (and .aux sidecar)")
    tv.set_defaults(func=_cmd_transform_verify)

    v = sub.add_parser("env", help="benchmark environments")
    vsub = v.add_subparsers(dest="action", required=True)
    vb = vsub.add_parser("build")
    vb.add_argument("name", help="environment name or spec file")
    vb.add_argument("--out", required=True)
    vb.add_argument("--behavior-out", default=None, help="also write a behavior policy")
    vb.add_argument("--behavior", choices=("softmax_q", "perturbed_optimal"), default="softmax_q")
    vb.add_argument("--temp", type=float, default=0.1)
    vb.add_argument("--seed", type=int, default=0)
    vb.set_defaults(func=_cmd_env_build)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "bounds":
        if args.sweep_states is None and args.states is None:
            ap.error("bounds needs --states unless --sweep-states is given")
        if args.sweep_states is not None and args.zeta is None:
            ap.error("--sweep-states needs --zeta")
    try:
        return args.func(args)
    except TightSpiError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
