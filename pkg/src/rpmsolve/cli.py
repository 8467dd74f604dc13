"""Command-line entry point: ``rpmsolve {gen,solve,bench,diag} [options]``.

Exit codes: 0 success, 1 numerical failure (JSON error on stdout), 2 when
every benchmark system was skipped, 64 for usage errors.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import bench
from .diagnostics import column_space, row_space, stopping_times
from .distributed import partition_banded, partition_rows, sim_solve
from .mtx import load_matrix_market, write_matrix_market
from .sketches import make_source
from .solvers import TerminationCriteria, solve
from .system import (SpectrumSpec, gen_banded, gen_prescribed_svd,
                     make_consistent_system, rng_from_seed)

EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


class UsageError(Exception):
    pass


def parse_system_token(token, seed):
    """Build a matrix from ``identity:N``, ``gaussian:NxD``, ``svd:N:COND`` or ``banded:N:H``.

    Returns ``(A, half_bandwidth)``; the bandwidth is ``None`` except for banded systems.
    """
    kind, _, rest = token.partition(":")
    try:
        if kind == "identity":
            return np.eye(int(rest)), 0
        if kind == "gaussian":
            n, _, d = rest.partition("x")
            return rng_from_seed(seed).standard_normal((int(n), int(d or n))), None
        if kind == "svd":
            n, _, cond = rest.partition(":")
            n = int(n)
            spec = SpectrumSpec.geometric(n, float(cond or 1e3), seed)
            return gen_prescribed_svd(n, n, spec), None
        if kind == "banded":
            n, _, h = rest.partition(":")
            h = int(h or 2)
            return gen_banded(int(n), h, seed), h
    except ValueError as exc:
        raise UsageError(f"bad system token {token!r}: {exc}") from None
    raise UsageError(f"unknown system kind {kind!r}; use identity, gaussian, svd or banded")


def _load_system(args):
    if args.mtx:
        A = load_matrix_market(args.mtx)
        return make_consistent_system(A, args.seed + 1, name=os.path.basename(args.mtx))
    A, h = parse_system_token(args.system, args.seed)
    return make_consistent_system(A, args.seed + 1, name=args.system, half_bandwidth=h)


def _criteria(args):
    budget = None if args.budget_ms is None else args.budget_ms / 1000.0
    return TerminationCriteria(args.factor, max_iterations=args.max_iters,
                               wall_clock_budget=budget, check_every=args.check_every)


def cmd_gen(args):
    system = _load_system(args)
    if args.out:
        write_matrix_market(args.out, system.A)
    print(json.dumps({"n": system.n, "d": system.d, "out": args.out,
                      "nonzeros": int(np.count_nonzero(system.A))}))
    return 0


def cmd_solve(args):
    system = _load_system(args)
    crit = _criteria(args)
    if args.distributed:
        h = system.half_bandwidth if args.bandwidth is None else args.bandwidth
        if h is not None and args.mtx is None:
            part = partition_banded(system.n, h, args.nodes)
        else:
            part = partition_rows(system.A, args.nodes)
        result = sim_solve(system, part, strategy=args.strategy, criteria=crit, m=args.m,
                           seed=args.seed)
        payload = result.report.to_json()
        payload["communicated_values"] = int(result.ledger.totals().sum())
        if args.out:
            result.ledger.to_csv(args.out)
        print(json.dumps(payload))
        return 0
    report = solve(system, args.strategy, method=args.method, m=args.m, criteria=crit,
                   seed=args.seed)
    print(json.dumps(report.to_json()))
    return 0


def cmd_diag(args):
    system = _load_system(args)
    source = make_source(args.strategy, system, args.seed)
    steps = args.max_iters if args.max_iters is not None else 3 * max(system.n, system.d)
    crit = TerminationCriteria(max_iterations=steps, check_every=max(1, steps))
    report = solve(system, source, method="base", criteria=crit, seed=args.seed,
                   record_trace=True)
    side = "column" if source.column else "row"
    target = column_space(system.A) if side == "column" else row_space(system.A)
    log = stopping_times(system.A, report.trace.sketches, target, side=side)
    print(log.to_json())
    return 0


def cmd_bench(args):
    if args.mtx:
        systems = [(os.path.basename(p), p) for p in args.mtx]
        tag = args.tag or "MatrixMarket"
    elif args.full_scale:
        systems = bench.default_systems(size=500, count=10, seed=args.seed)
        tag = args.tag or "Synthetic500"
    else:
        systems = bench.default_systems(size=args.size, count=args.count, seed=args.seed)
        tag = args.tag or "Synthetic"
    metric = "wall" if args.full_scale and args.metric is None else (args.metric or "iters")
    budget = 3.0 if args.budget_ms is None else args.budget_ms / 1000.0
    cfg = bench.BenchConfig(
        systems=systems, strategies=args.strategy or ["countsketch:10"],
        improvement_factor=args.factor if args.factor is not None else 0.1,
        time_budget=budget, metric=metric,
        max_iterations=args.max_iters if args.max_iters is not None else 20000,
        seed=args.seed, repetitions=args.repetitions)
    grids = bench.run_grid(cfg)
    if all(not rows for rows in grids.values()):
        print(json.dumps({"error": "NoSystems", "message": "every system was skipped"}))
        return 2
    os.makedirs(args.out, exist_ok=True)
    written = []
    for token, rows in grids.items():
        path = os.path.join(args.out, bench.csv_filename(tag, token))
        bench.emit_csv(rows, path)
        written.append(path)
    summary = {"files": written, "metric": metric}
    if metric == "wall":
        summary["host"] = bench.host_metadata()
    print(json.dumps(summary))
    return 0


def build_parser():
    parser = _Parser(prog="rpmsolve", description="Randomized projection solvers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, system_default="svd:200:1e3"):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--system", default=system_default,
                       help="identity:N | gaussian:NxD | svd:N:COND | banded:N:H")
        p.add_argument("--mtx", help="Matrix Market file (overrides --system)")
        p.add_argument("--strategy", default="cyclic")
        p.add_argument("--max-iters", type=int, default=None)

    g = sub.add_parser("gen", help="generate a test matrix")
    common(g)
    g.add_argument("--out")

    s = sub.add_parser("solve", help="solve one system and print a JSON report")
    common(s)
    s.add_argument("--method", choices=["base", "partial", "complete"], default="base")
    s.add_argument("--m", type=int, default=5)
    s.add_argument("--factor", type=float, default=1e-8)
    s.add_argument("--budget-ms", type=float, default=None)
    s.add_argument("--check-every", type=int, default=1)
    s.add_argument("--distributed", action="store_true")
    s.add_argument("--nodes", type=int, default=4)
    s.add_argument("--bandwidth", type=int, default=None,
                   help="half bandwidth used to partition a banded system")
    s.add_argument("--out", help="ledger CSV path (distributed only)")

    d = sub.add_parser("diag", help="print stopping times and rate bounds as JSON")
    common(d, system_default="identity:3")

    b = sub.add_parser("bench", help="time-to-tenfold-improvement grid")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--strategy", action="append")
    b.add_argument("--metric", choices=["iters", "wall"], default=None)
    b.add_argument("--factor", type=float, default=None)
    b.add_argument("--budget-ms", type=float, default=None)
    b.add_argument("--max-iters", type=int, default=None)
    b.add_argument("--repetitions", type=int, default=1)
    b.add_argument("--mtx", action="append")
    b.add_argument("--full-scale", action="store_true",
                   help="ten 500x500 systems, timed by wall clock")
    b.add_argument("--size", type=int, default=200)
    b.add_argument("--count", type=int, default=10)
    b.add_argument("--tag")
    b.add_argument("--out", default=".")
    return parser


_COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "diag": cmd_diag, "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rpmsolve: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
