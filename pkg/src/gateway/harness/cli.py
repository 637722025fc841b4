"""Command line entry point ``gateway``.

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 on usage or domain errors. ``GATEWAY_SEED`` overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from ..errors import ConvergenceError, DomainError, TruncationError
from ..generators import build_generator
from ..kernels import RngStream
from ..semigroups import expm_action
from ..simulate import METHODS, PROCESSES, SamplerConfig, sample_batched, sample_process, write_samples_csv
from ..spectral import entropy_decay_experiment, spectral_evaluate, spectral_expand, write_spectrum_csv
from .registry import SUITES, run_suite
from .report import combined_json

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _seed(args) -> int:
    env = os.environ.get("GATEWAY_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise DomainError(f"GATEWAY_SEED must be an integer, got {env!r}")
    return args.seed


def _cmd_sample(args) -> int:
    seed = _seed(args)
    if args.n < 1:
        raise DomainError("--n must be positive")
    draw = lambda g, k: sample_process(args.process, args.method, beta=args.beta, sigma=args.sigma,
                                       t=args.t, x0=args.x0, n=k, rng=g)
    values = sample_batched(SamplerConfig(args.n, RngStream(seed), args.method), draw, jobs=args.jobs)
    write_samples_csv(args.out or sys.stdout, values)
    if args.out:
        print(f"wrote {len(values)} samples to {args.out} (mean {np.mean(values):.6g})")
    return EXIT_OK


def _cmd_verify(args) -> int:
    seed = _seed(args)
    params = {"beta": args.beta, "sigma": args.sigma, "varsigma": args.varsigma, "t": args.t, "tol": args.tol,
              "n_samples": args.n_samples}
    names = list(SUITES) if args.suite == "all" else [args.suite]
    if args.suite != "all" and args.suite not in SUITES:
        raise DomainError(f"unknown suite {args.suite!r}; known: all, {', '.join(SUITES)}")
    start = time.perf_counter()
    reports = []
    for name in names:
        rep = run_suite(name, params, seed, jobs=args.jobs)
        reports.append(rep)
        print(f"[{'PASS' if rep.passed else 'FAIL'}] {name} ({len(rep.checks)} checks, {rep.runtime_ms} ms)")
        for c in rep.checks:
            if args.verbose or not c.passed:
                print(f"    {'ok  ' if c.passed else 'FAIL'} {c.name}: {c.statistic:.3e} (threshold {c.threshold:.1e})")
    total_ms = int(round((time.perf_counter() - start) * 1000))
    if args.json:
        if len(reports) == 1:
            text = reports[0].to_json()
        else:
            text = combined_json(reports, seed, {k: v for k, v in params.items() if v is not None}, total_ms)
        with open(args.json, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    ok = all(r.passed for r in reports)
    print(f"{sum(r.passed for r in reports)}/{len(reports)} suites passed in {total_ms / 1000:.1f} s")
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_spectral(args) -> int:
    if args.truncation < 1 or args.grid < 2:
        raise DomainError("--truncation must be >= 1 and --grid >= 2")
    g = np.zeros(args.init + 1)
    g[args.init] = 1.0
    exp = spectral_expand("discrete_laguerre", args.beta, g, args.truncation)
    gen = build_generator("laguerre_bd", args.beta, 1.0, args.grid)
    gg = np.zeros(args.grid)
    gg[: len(g)] = g
    ref = expm_action(gen, args.t, gg, side="right")
    states = np.arange(min(31, args.grid))
    diff = float(np.max(np.abs(spectral_evaluate(exp, args.t, states) - ref[states])))
    write_spectrum_csv(args.out or sys.stdout, exp, args.t)
    print(f"sup |spectral - uniformization| over states < {len(states)}: {diff:.3e}", file=sys.stderr)
    return EXIT_OK


def _cmd_entropy(args) -> int:
    if args.steps < 1 or not args.t_max > 0:
        raise DomainError("--steps must be >= 1 and --t-max > 0")
    ts = np.linspace(0.0, args.t_max, args.steps + 1)
    res = entropy_decay_experiment(args.beta, args.sigma, args.init, ts)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t", "entropy", "bound", "margin"])
        for r in res["rows"]:
            w.writerow([f"{r['t']:.17e}", f"{r['entropy']:.17e}", f"{r['bound']:.17e}", f"{r['margin']:.17e}"])
    finally:
        if args.out:
            out.close()
    return EXIT_OK if res["pass"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gateway", description="Squared Bessel / birth-death gateway toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="draw samples from a transition law")
    s.add_argument("--process", required=True, choices=PROCESSES)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--x0", type=float, required=True)
    s.add_argument("--method", choices=METHODS, default="mixture")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=_cmd_sample)

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--suite", required=True, help="suite name or 'all'")
    v.add_argument("--beta", type=float)
    v.add_argument("--sigma", type=float)
    v.add_argument("--varsigma", type=float)
    v.add_argument("--t", type=float, help="replace the built-in time grid")
    v.add_argument("--tol", type=float, help="replace the tolerance of every non-exact deterministic check")
    v.add_argument("--n-samples", type=int, dest="n_samples")
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--json")
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("-v", "--verbose", action="store_true")
    v.set_defaults(func=_cmd_verify)

    sp = sub.add_parser("spectral", help="discrete Laguerre expansion of an indicator")
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--truncation", type=int, required=True, help="number of eigenfunctions")
    sp.add_argument("--grid", type=int, required=True, help="state-space size of the uniformization reference")
    sp.add_argument("--init", type=int, default=0, help="expand the indicator of this state")
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_spectral)

    e = sub.add_parser("entropy", help="relative entropy decay of the discrete Laguerre chain")
    e.add_argument("--beta", type=float, required=True)
    e.add_argument("--sigma", type=float, required=True)
    e.add_argument("--t-max", type=float, required=True, dest="t_max")
    e.add_argument("--steps", type=int, required=True)
    e.add_argument("--init", type=int, required=True)
    e.add_argument("--out")
    e.set_defaults(func=_cmd_entropy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except (DomainError, TruncationError, ConvergenceError, ValueError) as exc:
        print(f"gateway: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
