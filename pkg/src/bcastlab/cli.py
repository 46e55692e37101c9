"""Command-line front end: ``bcastlab model|simulate|tune|bench``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import random
import statistics
import sys
from typing import Sequence

from .core import Algorithm, AlgorithmConfig, InvalidParameterError, NetworkParams
from .models import cost
from .runtime import BcastRequest, RankFailure, run_bcast
from .schedules import build_schedule
from .simengine import SimulationError, simulate, write_trace
from .transport import TransportError, make_fabric
from .tuner import (
    DEFAULT_CHUNKS,
    MB,
    Oracle,
    TableFormatError,
    TuningLookupError,
    crossovers,
    load_table,
    power_of_two_sizes,
    save_table,
    select,
    tune,
)

BENCH_HEADER = ["size_bytes", "algorithm", "chunk_bytes", "avg_us", "min_us", "max_us", "iterations"]


class UsageError(Exception):
    pass


def _int(text: str) -> int:
    """Byte counts; scientific notation accepted when it is integral (``1e6``)."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value.is_integer():
        raise argparse.ArgumentTypeError(f"expected a whole number of bytes: {text!r}")
    return int(value)


def _int_list(text: str) -> list[int]:
    return [_int(t) for t in text.split(",") if t.strip()]


def _add_link_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bandwidth", type=float, default=1e9, help="link bandwidth B, bytes/s")
    p.add_argument("--startup", type=float, default=1e-6, help="startup time t_s, seconds")
    p.add_argument("--pcie-bandwidth", type=float, default=1e10,
                   help="host-staging bandwidth B_PCIe, bytes/s")


def _add_algo_flags(p: argparse.ArgumentParser, allow_auto: bool = False) -> None:
    names = [a.value for a in Algorithm] + (["auto"] if allow_auto else [])
    p.add_argument("--algo", required=True, choices=names)
    p.add_argument("--radix", type=int, help="tree radix k (knomial, knomial_staged)")
    p.add_argument("--chunk", type=_int, help="chunk size C in bytes (chain_pipelined)")


def _params(args) -> NetworkParams:
    try:
        return NetworkParams(args.startup, args.bandwidth, args.pcie_bandwidth)
    except InvalidParameterError as exc:
        raise UsageError(str(exc)) from None


def _config(args) -> AlgorithmConfig:
    algo = Algorithm.parse(args.algo)
    if algo.uses_radix and args.radix is None:
        raise UsageError(f"--radix is required for {algo.value}")
    if algo.uses_chunk and args.chunk is None:
        raise UsageError(f"--chunk is required for {algo.value}")
    try:
        return AlgorithmConfig.make(algo, args.radix or 0, args.chunk or 0)
    except InvalidParameterError as exc:
        raise UsageError(str(exc)) from None


def _print_rows(rows: list[tuple[str, object]], fmt: str, out) -> None:
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow([k for k, _ in rows])
        w.writerow([v for _, v in rows])
    else:
        width = max(len(k) for k, _ in rows)
        for k, v in rows:
            out.write(f"{k:<{width}}  {v}\n")


def _fmt(x: float) -> str:
    return f"{x:.6e}"


def cmd_model(args, out) -> int:
    config, p = _config(args), _params(args)
    try:
        c = cost(config, args.n, args.msg_size, p)
    except InvalidParameterError as exc:
        raise UsageError(str(exc)) from None
    _print_rows([
        ("algorithm", config.label()),
        ("n", args.n),
        ("msg_size", args.msg_size),
        ("total_s", _fmt(c.total_s)),
        ("startup_term_s", _fmt(c.startup_term_s)),
        ("bandwidth_term_s", _fmt(c.bandwidth_term_s)),
        ("staging_term_s", _fmt(c.staging_term_s)),
    ], args.format, out)
    return 0


def cmd_simulate(args, out) -> int:
    config, p = _config(args), _params(args)
    try:
        s = build_schedule(config, args.n, args.root, args.msg_size)
    except InvalidParameterError as exc:
        raise UsageError(str(exc)) from None
    result = simulate(s, p, trace=args.trace is not None)
    if args.trace is not None:
        with open(args.trace, "w", newline="", encoding="utf-8") as fh:
            write_trace(result, fh)
    _print_rows([
        ("algorithm", config.label()),
        ("n", args.n),
        ("msg_size", args.msg_size),
        ("completion_s", _fmt(result.total_s)),
        ("coverage", "ok" if result.coverage_ok else "FAILED"),
        ("events", s.event_count()),
    ], args.format, out)
    return 0 if result.coverage_ok else 1


def _parse_candidates(text: str) -> list[AlgorithmConfig]:
    """``knomial:2,chain_pipelined`` -> templates; ``name:k`` sets the radix."""
    out = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        name, _, arg = tok.partition(":")
        algo = Algorithm.parse(name)
        radix = int(arg) if arg else (2 if algo.uses_radix else 0)
        out.append(AlgorithmConfig.make(algo, radix, DEFAULT_CHUNKS[0] if algo.uses_chunk else 0))
    if not out:
        raise UsageError("no candidates given")
    return out


def cmd_tune(args, out) -> int:
    p = _params(args)
    try:
        candidates = _parse_candidates(args.candidates)
        sizes = power_of_two_sizes(args.min_size, args.max_size)
        table = tune(args.n_list, sizes, candidates, args.chunks, p, Oracle(args.oracle))
    except InvalidParameterError as exc:
        raise UsageError(str(exc)) from None
    save_table(table, args.out)
    out.write(f"wrote {len(table.entries)} entries to {args.out}\n")
    for n, changes in crossovers(table).items():
        first = table.for_n(n)[0].config
        steps = ", ".join(f"{c.label()} from {m} B" for m, c in changes) or "no crossover"
        out.write(f"n={n}: {first.label()} from {table.for_n(n)[0].msg_min_bytes} B; {steps}\n")
    return 0


def cmd_bench(args, out) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if not 0 <= args.root < args.n:
        raise UsageError(f"--root must be in [0, {args.n})")
    table = None
    fixed = None
    if args.algo == "auto":
        if not args.table:
            raise UsageError("--algo auto needs --table")
        table = load_table(args.table)
    else:
        fixed = _config(args)
    try:
        sizes = power_of_two_sizes(args.min_size, args.max_size)
    except InvalidParameterError as exc:
        raise UsageError(str(exc)) from None
    if args.iterations < 1 or args.warmup < 0:
        raise UsageError("--iterations must be >= 1 and --warmup >= 0")

    rng = random.Random(args.seed)
    rows = []
    with make_fabric(args.transport, args.n, args.base_port) as fabric:
        for size in sizes:
            try:
                config = select(table, args.n, size) if table is not None else fixed
            except TuningLookupError as exc:
                raise UsageError(str(exc)) from None
            payload = rng.randbytes(size)
            schedule = None
            times = []
            for it in range(args.warmup + args.iterations):
                buffers = [bytearray(payload) if r == args.root else bytearray(size)
                           for r in range(args.n)]
                req = BcastRequest(args.n, args.root, buffers, config)
                res = run_bcast(req, fabric, schedule)
                schedule = res.schedule
                bad = [r for r, b in enumerate(res.buffers) if b != payload]
                if bad:
                    raise TransportError(f"size {size}: ranks {bad} hold wrong data")
                if it >= args.warmup:
                    times.append(res.wall_s * 1e6)
            rows.append([size, config.algorithm.value, config.chunk_bytes,
                         f"{statistics.fmean(times):.3f}", f"{min(times):.3f}",
                         f"{max(times):.3f}", args.iterations])

    out.write(f"# bcast n={args.n} root={args.root} transport={args.transport}\n")
    out.write(f"{'size_bytes':>12} {'algorithm':>24} {'chunk':>9} {'avg_us':>12} "
              f"{'min_us':>12} {'max_us':>12}\n")
    for r in rows:
        out.write(f"{r[0]:>12} {r[1]:>24} {r[2]:>9} {r[3]:>12} {r[4]:>12} {r[5]:>12}\n")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BENCH_HEADER)
            w.writerows(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcastlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="evaluate a closed-form cost model")
    _add_algo_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--msg-size", type=_int, required=True)
    _add_link_flags(p)
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.set_defaults(func=cmd_model, subparser=p)

    p = sub.add_parser("simulate", help="simulate a generated schedule")
    _add_algo_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--msg-size", type=_int, required=True)
    p.add_argument("--root", type=int, default=0)
    _add_link_flags(p)
    p.add_argument("--trace", help="write a per-event CSV trace here")
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.set_defaults(func=cmd_simulate, subparser=p)

    p = sub.add_parser("tune", help="build a tuning table")
    p.add_argument("--n-list", type=_int_list, default=[4, 8, 16])
    p.add_argument("--min-size", type=_int, default=1)
    p.add_argument("--max-size", type=_int, default=64 * MB)
    p.add_argument("--candidates", default="knomial:2,chain_pipelined",
                   help="comma list of algorithm[:radix]")
    p.add_argument("--chunks", type=_int_list, default=list(DEFAULT_CHUNKS),
                   help="comma list of chunk sizes for chain_pipelined")
    p.add_argument("--oracle", choices=[o.value for o in Oracle], default="analytical")
    _add_link_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune, subparser=p)

    p = sub.add_parser("bench", help="osu_bcast-style latency sweep over a local transport")
    p.add_argument("--n", type=int, required=True)
    _add_algo_flags(p, allow_auto=True)
    p.add_argument("--table", help="tuning table for --algo auto")
    p.add_argument("--root", type=int, default=0)
    p.add_argument("--min-size", type=_int, default=1)
    p.add_argument("--max-size", type=_int, default=4 * MB)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--transport", choices=["inproc", "socket"], default="inproc")
    p.add_argument("--base-port", type=int, default=0, help="socket transport: rank r listens on base+r")
    p.add_argument("--csv", help="write results as CSV here")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench, subparser=p)
    return parser


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except UsageError as exc:
        args.subparser.print_usage(sys.stderr)
        print(f"bcastlab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, SimulationError, RankFailure, TableFormatError) as exc:
        print(f"bcastlab {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
