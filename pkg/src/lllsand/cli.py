"""Command-line driver: ``python -m lllsand <command>``.

Commands: gen, run, compare, theorems, limit-dist.  ``LAB_SEED`` in the
environment overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .experiment import (LATTICE_MODELS, MODELS, ConfigError, ExperimentConfig, load_runs,
                         run_trials, write_outputs)
from .inputs import KINDS, GeneratorSpec, direct_gso_sample, knapsack_basis, sandpile_input
from .rng import INPUT, stream
from .sandpile import SandpileParams, parallelepiped_limit, ssp_corner_density
from .stats import compare_runs, optimal_delta_check, ssp_rhf_check, termination_check_thm3

PAPER_TRIALS = 5000


def _seed(args) -> int:
    env = os.environ.get("LAB_SEED")
    return int(env) if env not in (None, "") else int(args.seed)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lllsand", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write one generated input")
    g.add_argument("--kind", choices=KINDS, default="knapsack")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--bits", type=int, default=None)
    g.add_argument("--r-range", type=float, nargs=2, default=(0.0, 1.0))
    g.add_argument("--height-range", type=int, nargs=2, default=(0, 1))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--trial", type=int, default=0)
    g.add_argument("--out", default="-")

    r = sub.add_parser("run", help="run a batch of trials")
    _common(r)
    r.add_argument("--model", choices=MODELS, default="lll")
    r.add_argument("--delta", type=float, default=0.7)
    r.add_argument("--T", type=int, default=400)
    r.add_argument("--I", type=int, default=200)
    r.add_argument("--policy", choices=("lowest", "random", "highest"), default="lowest")
    r.add_argument("--max-steps", type=int, default=None)
    r.add_argument("--generator", choices=KINDS, default=None)
    r.add_argument("--bits", type=int, default=None)
    r.add_argument("--r-range", type=float, nargs=2, default=(0.0, 1.0))
    r.add_argument("--height-range", type=int, nargs=2, default=None)
    r.add_argument("--parallelism", type=int, default=1)
    r.add_argument("--paper-scale", action="store_true", help=f"{PAPER_TRIALS} trials per run")
    r.add_argument("--manifest", default=None, help="rerun the experiment recorded in this manifest")
    r.add_argument("--out", required=True)

    c = sub.add_parser("compare", help="compare two run directories")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--site-tol", type=float, default=0.01)
    c.add_argument("--rhf-tol", type=float, default=0.001)
    c.add_argument("--alpha", type=float, default=0.01)

    t = sub.add_parser("theorems", help="empirical checks of the SSP / LLL-SP theorems")
    t.add_argument("which")
    _common(t)
    t.add_argument("--T", type=int, default=400)
    t.add_argument("--I", type=int, default=200)
    t.add_argument("--delta", type=float, default=None)
    t.add_argument("--energy", type=float, default=None)
    t.add_argument("--eps", type=float, default=0.1)
    t.add_argument("--eta", type=float, default=0.01)
    t.add_argument("--paper-scale", action="store_true")

    d = sub.add_parser("limit-dist", help="parallelepiped limit distribution")
    d.add_argument("--n", type=int, default=3)
    d.add_argument("--I", type=int, default=4)
    d.add_argument("--T", type=int, default=None)
    d.add_argument("--tol", type=float, default=1e-13)
    d.add_argument("--out", default=None)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    if args.manifest:
        manifest = json.loads(Path(args.manifest).read_text())
        cfg = ExperimentConfig.from_dict(manifest["config"], args.out)
        cfg.parallelism = args.parallelism
        return cfg
    lattice = args.model in LATTICE_MODELS
    n = args.n if args.n is not None else (80 if lattice else 100)
    trials = args.trials if args.trials is not None else 500
    if args.paper_scale:
        trials = PAPER_TRIALS
    if lattice:
        kind = args.generator or "knapsack"
        params = {"delta": args.delta, "policy": args.policy}
        hr = (0, 1)
    else:
        kind = args.generator or "sandpile-uniform"
        params = {"T": args.T, "I": args.I, "policy": args.policy}
        hr = tuple(args.height_range) if args.height_range else (0, 4 * args.T)
    if args.max_steps is not None:
        params["max_steps"] = args.max_steps
    spec = GeneratorSpec(kind, n, bits=args.bits, r_range=tuple(args.r_range), height_range=hr)
    return ExperimentConfig(args.model, spec, params, trials, _seed(args), args.parallelism, args.out)


def cmd_run(args) -> int:
    try:
        cfg = _config_from_args(args)
        cfg.validate()
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    results = run_trials(cfg)
    summary = write_outputs(cfg, results, args.out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    if summary["unfinished_trials"]:
        print(f"{len(summary['unfinished_trials'])} trial(s) did not terminate", file=sys.stderr)
        return 3
    return 0


def cmd_compare(args) -> int:
    ma, a = load_runs(args.run_a)
    mb, b = load_runs(args.run_b)
    if a.shape[1] != b.shape[1]:
        print(f"dimension mismatch: n={a.shape[1] + 1} vs n={b.shape[1] + 1}", file=sys.stderr)
        return 2
    rep = compare_runs(a, b, args.site_tol, args.rhf_tol, args.alpha)
    print("site,mean_diff")
    for i, v in enumerate(rep.site_diff, start=1):
        print(f"{i},{v!r}")
    print(f"max |mean diff| over middle sites: {rep.max_middle_diff:.6g} (tol {rep.site_tol})")
    print(f"mean RHF: {rep.rhf_mean_a:.6f} vs {rep.rhf_mean_b:.6f}, diff {rep.rhf_diff:.6g} (tol {rep.rhf_tol})")
    print(f"KS statistic: {rep.ks:.6g} (critical {rep.ks_critical:.6g})")
    print("PASS" if rep.passed else "FAIL")
    return 0 if rep.passed else 1


def _thm2(args) -> int:
    n = args.n or 100
    trials = args.trials or (PAPER_TRIALS if args.paper_scale else 500)
    spec = GeneratorSpec("sandpile-uniform", n, height_range=(0, 4 * args.T))
    cfg = ExperimentConfig("ssp", spec, {"T": args.T, "I": args.I}, trials, _seed(args))
    finals = [r.heights for r in run_trials(cfg)]
    rep = ssp_rhf_check(finals, args.T, args.I)
    print(f"mean log RHF {rep.mean_log_rhf:.4f}; bound T/2 - I/(2e^2) = {rep.upper_bound:.4f}; "
          f"empirical T/2 - I/8 = {rep.empirical_target:.4f}; max {rep.max_log_rhf:.4f} <= T/2 = {args.T / 2}")
    print("PASS" if rep.passed() else "FAIL")
    return 0 if rep.passed() else 1


def _thm3(args) -> int:
    rep = termination_check_thm3(args.n or 40, args.delta or 0.5, args.energy or 1e6,
                                 args.trials or 200, _seed(args))
    print(f"E = {rep.energy:.6g}, H = {rep.floor:.6g}, N = {rep.steps}")
    print(f"fraction not terminated after N steps: {rep.fraction_not_terminated:.4f}")
    print(f"F_N / N = {rep.mean_increment:.4f} (2(1 + log 2) = 3.3863)")
    ok = rep.fraction_not_terminated >= 0.99
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _thm4(args) -> int:
    rep = optimal_delta_check(args.trials or 200, args.eta, args.eps, args.n or 20,
                              args.energy or 1e4, _seed(args), args.delta or 0.75)
    print(f"delta = {rep.delta}, d = {rep.d:.6g}, median budget {int(np.median(rep.budgets))}, "
          f"median steps used {int(np.median(rep.steps))}")
    print(f"fraction terminated: {rep.fraction_terminated:.4f} (need >= {1 - rep.eta})")
    print("PASS" if rep.passed else "FAIL")
    return 0 if rep.passed else 1


def cmd_theorems(args) -> int:
    handlers = {"thm2": _thm2, "thm3": _thm3, "thm4": _thm4}
    if args.which not in handlers:
        print(f"unknown theorem id {args.which!r}; choose from {sorted(handlers)}", file=sys.stderr)
        return 2
    try:
        return handlers[args.which](args)
    except ValueError as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return 2


def cmd_limit_dist(args) -> int:
    T = args.T if args.T is not None else 2 * args.I
    try:
        dist, report = parallelepiped_limit(args.n, args.I, args.tol)
        corner = ssp_corner_density(dist, args.n, args.I, SandpileParams(T, args.I))
    except (ValueError, RuntimeError) as exc:
        print(exc, file=sys.stderr)
        return 2
    print(f"iterations {report.iterations}, last TV change {report.tv_change:.3g}, "
          f"fixed-point residual {report.fixed_point_residual:.3g}")
    print(f"corner weight {float(dist.weights.flat[0])!r}; steady-state max density {corner!r}; "
          f"(I/2)^-(n-1) = {(args.I / 2) ** -(args.n - 1)!r}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"offset_{i}" for i in range(1, args.n)] + ["weight"])
            for o in np.ndindex(*dist.weights.shape):
                w.writerow(list(o) + [repr(float(dist.weights[o]))])
    return 0


def cmd_gen(args) -> int:
    try:
        spec = GeneratorSpec(args.kind, args.n, args.bits, tuple(args.r_range), tuple(args.height_range),
                             _seed(args))
    except ValueError as exc:
        print(f"invalid generator spec: {exc}", file=sys.stderr)
        return 2
    rng = stream(spec.seed, args.trial, INPUT)
    if spec.kind == "knapsack":
        text = knapsack_basis(spec, rng).to_text()
    elif spec.kind == "direct-gso":
        text = direct_gso_sample(spec, rng).to_json() + "\n"
    else:
        text = json.dumps(sandpile_input(spec, rng).to_list()) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "compare": cmd_compare, "theorems": cmd_theorems,
            "limit-dist": cmd_limit_dist}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
