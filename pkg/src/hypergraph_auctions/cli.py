"""Command-line interface: ``hypergraph-auctions {solve,compare,generate,payments,verify}``.

Reports are JSON on standard output.  Exit codes: 0 success, 2 usage or
input error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .core import Instance, welfare
from .exact import solve_bruteforce, solve_treewidth
from .instances import (
    InstanceFormatError,
    KINDS,
    format_number,
    generate,
    parse,
    results_document,
    serialize,
    to_jsonable,
)
from .lp import to_lp_format
from .midr import MidrConfig, run_midr
from .rounding import batch_welfare, build_compact_lp, round_batch, solve_and_round, solve_compact_lp
from .structured import baker_allocate, chromatic_allocate, vcg_mechanism
from .verification import SUITES

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VERIFY = 3

DEFAULT_SEED = 0
DEFAULT_EPSILON = "0.5"
ALGORITHMS = ("brute", "treewidth", "lp-round", "baker", "chromatic", "midr")


class UsageError(Exception):
    pass


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _midr_config(inst: Instance, B: Optional[int], alpha: Optional[Fraction]) -> MidrConfig:
    base = MidrConfig.default(inst.num_goods)
    return MidrConfig(B if B is not None else base.B, alpha if alpha is not None else base.alpha)


def _check_flags(args) -> None:
    alg = args.algorithm
    if args.epsilon is not None and alg != "baker":
        raise UsageError("--epsilon applies only to --algorithm baker")
    if (args.B is not None or args.alpha is not None) and alg != "midr":
        raise UsageError("--B and --alpha apply only to --algorithm midr")
    if args.trials is not None and alg != "lp-round":
        raise UsageError("--trials applies only to --algorithm lp-round")
    if args.dump_lp is not None and alg != "lp-round":
        raise UsageError("--dump-lp applies only to --algorithm lp-round")
    if args.trials is not None and args.trials < 1:
        raise UsageError("--trials must be >= 1")


def run_algorithm(alg: str, inst: Instance, seed: int, epsilon=None, trials=None, B=None, alpha=None, payments=True, dump_lp=None) -> dict:
    """Run one algorithm and return its results document with diagnostics."""
    lp_value = pays = ratio = None
    diagnostics: dict = {}
    if alg == "brute":
        if payments:
            out = vcg_mechanism(inst, solve_bruteforce)
            alloc, w, pays = out.allocation, out.range_welfare, out.payments
        else:
            alloc, w = solve_bruteforce(inst)
        ratio = Fraction(1)
    elif alg == "treewidth":
        if payments:
            out = vcg_mechanism(inst, solve_treewidth)
            alloc, w, pays = out.allocation, out.range_welfare, out.payments
        else:
            alloc, w = solve_treewidth(inst)
        ratio = Fraction(1)
    elif alg == "lp-round":
        if dump_lp is not None:
            Path(dump_lp).write_text(to_lp_format(build_compact_lp(inst)), encoding="utf-8")
        alloc, diagnostics = solve_and_round(inst, seed=seed, trials=trials or 1)
        w = welfare(inst, alloc)
        lp_value = diagnostics["lp_value"]
        ratio = Fraction(1, inst.rank)
    elif alg == "baker":
        eps = Fraction(epsilon if epsilon is not None else DEFAULT_EPSILON)
        out = baker_allocate(inst, eps, with_payments=payments)
        alloc, w, diagnostics = out.allocation, out.range_welfare, out.diagnostics
        pays = out.payments if payments else None
        ratio = max(Fraction(0), 1 - eps)
    elif alg == "chromatic":
        out = chromatic_allocate(inst, with_payments=payments)
        alloc, w, diagnostics = out.allocation, out.range_welfare, out.diagnostics
        pays = out.payments if payments else None
        colors = diagnostics["colors_used"]
        ratio = Fraction(1, colors) if colors else Fraction(1)
    elif alg == "midr":
        cfg = _midr_config(inst, B, alpha)
        out = run_midr(inst, cfg, seed=seed, with_payments=payments)
        alloc = out.allocation
        w = welfare(inst, alloc)
        diagnostics = dict(out.diagnostics, expected_welfare=out.range_welfare)
        lp_value = diagnostics["lp_value"]
        pays = out.payments if payments else None
        ratio = Fraction(1) / (out.diagnostics["alpha"] * cfg.B**inst.rank)
    else:
        raise UsageError(f"unknown algorithm {alg!r}")
    doc = results_document(alg, seed, alloc, w, lp_value, pays, ratio)
    doc["diagnostics"] = to_jsonable(diagnostics)
    return doc


def _emit(report: dict, started: float) -> None:
    report["timing"] = {"seconds": round(time.perf_counter() - started, 6)}
    print(json.dumps(report, indent=2))


def cmd_solve(args, argv) -> int:
    _check_flags(args)
    started = time.perf_counter()
    inst = parse(args.instance)
    doc = run_algorithm(
        args.algorithm,
        inst,
        args.seed,
        epsilon=args.epsilon,
        trials=args.trials,
        B=args.B,
        alpha=args.alpha,
        payments=not args.no_payments,
        dump_lp=args.dump_lp,
    )
    config = {"seed": args.seed, "epsilon": args.epsilon, "B": args.B, "alpha": args.alpha, "trials": args.trials}
    report = {"command": list(argv), "config": to_jsonable(config), **doc}
    _emit(report, started)
    return EXIT_OK


def _applicable(inst: Instance) -> list[str]:
    algs = ["brute"]
    if inst.rank <= 2:
        algs.append("treewidth")
    algs.append("lp-round")
    if inst.support_graph is not None and inst.rank <= 2:
        algs += ["baker", "chromatic"]
    if inst.num_goods <= 8:
        algs.append("midr")
    return algs


def compare_rows(inst: Instance, algorithms: Sequence[str], seed: int, epsilon: Fraction, trials: int) -> list[dict]:
    _, opt = solve_bruteforce(inst)
    rows = []
    for alg in algorithms:
        slack = 0.0
        if alg == "lp-round":
            sol = solve_compact_lp(inst)
            welfare_arr, scale = batch_welfare(inst, round_batch(sol, trials, seed))
            vals = welfare_arr.astype(float) / scale
            achieved = float(vals.mean())
            slack = 3 * float(vals.std(ddof=1)) / math.sqrt(trials) if trials > 1 else 0.0
            bound = Fraction(1, inst.rank)
        else:
            doc = run_algorithm(alg, inst, seed, epsilon=epsilon if alg == "baker" else None, payments=False)
            bound = Fraction(doc["ratio_certificate"])
            achieved = Fraction(doc["diagnostics"]["expected_welfare"]) if alg == "midr" else Fraction(doc["welfare"])
        if opt == 0:
            ratio = 1.0
            passed = True
        else:
            ratio = float(Fraction(achieved) / opt) if not isinstance(achieved, float) else achieved / float(opt)
            if isinstance(achieved, float):
                passed = achieved + slack >= float(bound * opt)
            else:
                passed = achieved >= bound * opt
        rows.append(
            {
                "algorithm": alg,
                "welfare": format_number(achieved) if isinstance(achieved, Fraction) else achieved,
                "opt": format_number(opt),
                "ratio": ratio,
                "bound": format_number(bound),
                "pass": passed,
            }
        )
    return rows


def cmd_compare(args, argv) -> int:
    started = time.perf_counter()
    inst = parse(args.instance)
    algorithms = args.algorithms.split(",") if args.algorithms else _applicable(inst)
    for alg in algorithms:
        if alg not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {alg!r}; choose from {', '.join(ALGORITHMS)}")
    epsilon = args.epsilon if args.epsilon is not None else Fraction(DEFAULT_EPSILON)
    rows = compare_rows(inst, algorithms, args.seed, epsilon, args.trials)
    if args.json:
        _emit({"command": list(argv), "seed": args.seed, "rows": rows}, started)
    else:
        print(f"{'algorithm':<10} {'welfare':>12} {'opt':>10} {'ratio':>8} {'bound':>10}  result")
        for row in rows:
            welfare_txt = row["welfare"] if isinstance(row["welfare"], str) else f"{row['welfare']:.4f}"
            print(
                f"{row['algorithm']:<10} {welfare_txt:>12} {row['opt']:>10} {row['ratio']:>8.4f} "
                f"{row['bound']:>10}  {'pass' if row['pass'] else 'FAIL'}"
            )
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_VERIFY


def cmd_generate(args, argv) -> int:
    params: dict = {}
    if args.kind == "random-hypergraph":
        params = dict(m=args.m, n=args.n, r=args.r, edge_count=args.edge_count, weight_range=(args.weight_min, args.weight_max))
    elif args.kind == "grid":
        params = dict(rows=args.rows, cols=args.cols, n=args.n, edge_prob=args.edge_prob)
    elif args.kind == "single-minded":
        params = dict(m=args.m, n=args.n, bundle_size=args.bundle_size)
    elif args.kind == "star":
        params = dict(m=args.m)
    missing = [k for k, v in params.items() if v is None]
    if missing:
        raise UsageError(f"--kind {args.kind} needs --{missing[0].replace('_', '-')}")
    text = serialize(generate(args.kind, seed=args.seed, **params))
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_payments(args, argv) -> int:
    started = time.perf_counter()
    inst = parse(args.instance)
    alg = {"vcg": "brute"}.get(args.mechanism, args.mechanism)
    if args.epsilon is not None and alg != "baker":
        raise UsageError("--epsilon applies only to --mechanism baker")
    if (args.B is not None or args.alpha is not None) and alg != "midr":
        raise UsageError("--B and --alpha apply only to --mechanism midr")
    doc = run_algorithm(alg, inst, args.seed, epsilon=args.epsilon, B=args.B, alpha=args.alpha)
    doc["algorithm"] = args.mechanism
    report = {"command": list(argv), "config": to_jsonable({"seed": args.seed, "epsilon": args.epsilon, "B": args.B, "alpha": args.alpha}), **doc}
    _emit(report, started)
    return EXIT_OK


def cmd_verify(args, argv) -> int:
    suite = SUITES[args.suite]
    kwargs = {"seed": args.seed}
    if args.count is not None:
        kwargs["count"] = args.count
    checks = suite(**kwargs)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    failed = sum(not c.passed for c in checks)
    print(f"{args.suite}: {len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypergraph-auctions", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one algorithm on an instance file")
    solve.add_argument("--algorithm", required=True, choices=ALGORITHMS)
    solve.add_argument("--instance", required=True)
    solve.add_argument("--seed", type=int, default=DEFAULT_SEED)
    solve.add_argument("--epsilon", type=_fraction)
    solve.add_argument("--trials", type=int)
    solve.add_argument("--B", type=int)
    solve.add_argument("--alpha", type=_fraction)
    solve.add_argument("--dump-lp", metavar="PATH", help="write the compact LP in LP format")
    solve.add_argument("--no-payments", action="store_true", help="skip payment computation")
    solve.set_defaults(func=cmd_solve)

    compare = sub.add_parser("compare", help="compare algorithms against brute force")
    compare.add_argument("--instance", required=True)
    compare.add_argument("--algorithms", help="comma-separated list (default: all applicable)")
    compare.add_argument("--seed", type=int, default=DEFAULT_SEED)
    compare.add_argument("--epsilon", type=_fraction)
    compare.add_argument("--trials", type=int, default=1000, help="rounding trials for lp-round")
    compare.add_argument("--json", action="store_true")
    compare.set_defaults(func=cmd_compare)

    gen = sub.add_parser("generate", help="write a seeded random instance")
    gen.add_argument("--kind", required=True, choices=KINDS)
    gen.add_argument("--seed", type=int, default=DEFAULT_SEED)
    gen.add_argument("--m", type=int)
    gen.add_argument("--n", type=int)
    gen.add_argument("--r", type=int, default=2)
    gen.add_argument("--edge-count", type=int, default=3)
    gen.add_argument("--weight-min", type=int, default=0)
    gen.add_argument("--weight-max", type=int, default=10)
    gen.add_argument("--rows", type=int)
    gen.add_argument("--cols", type=int)
    gen.add_argument("--edge-prob", type=float, default=0.5)
    gen.add_argument("--bundle-size", type=int)
    gen.add_argument("-o", "--output")
    gen.set_defaults(func=cmd_generate)

    pay = sub.add_parser("payments", help="allocation and payments of a truthful mechanism")
    pay.add_argument("--instance", required=True)
    pay.add_argument("--mechanism", required=True, choices=("vcg", "baker", "chromatic", "midr"))
    pay.add_argument("--seed", type=int, default=DEFAULT_SEED)
    pay.add_argument("--epsilon", type=_fraction)
    pay.add_argument("--B", type=int)
    pay.add_argument("--alpha", type=_fraction)
    pay.set_defaults(func=cmd_payments)

    ver = sub.add_parser("verify", help="run a property suite")
    ver.add_argument("--suite", required=True, choices=sorted(SUITES))
    ver.add_argument("--count", type=int)
    ver.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InstanceFormatError as exc:
        print(f"error: invalid instance file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
