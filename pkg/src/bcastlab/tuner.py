"""Brute-force algorithm and chunk-size selection, and tuning-table persistence."""

from __future__ import annotations

import bisect
import csv
import enum
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import Algorithm, AlgorithmConfig, InvalidParameterError, NetworkParams
from .models import cost
from .schedules import build_schedule
from .simengine import simulate

KB = 1024
MB = 1024 * KB

# 8 KB .. 4 MB
DEFAULT_CHUNKS: tuple[int, ...] = tuple(2**e for e in range(13, 23))

TABLE_HEADER = ["n", "msg_min_bytes", "msg_max_bytes", "algorithm", "radix",
                "chunk_bytes", "predicted_cost_s"]


class Oracle(enum.Enum):
    ANALYTICAL = "analytical"
    SIMULATED = "simulated"


class TableFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TuningLookupError(LookupError):
    pass


@dataclass(frozen=True)
class TableEntry:
    n: int
    msg_min_bytes: int
    msg_max_bytes: int
    config: AlgorithmConfig
    predicted_cost_s: float


@dataclass
class TuningTable:
    entries: list[TableEntry] = field(default_factory=list)
    oracle: Oracle = Oracle.ANALYTICAL

    def node_counts(self) -> list[int]:
        return sorted({e.n for e in self.entries})

    def for_n(self, n: int) -> list[TableEntry]:
        return [e for e in self.entries if e.n == n]


def evaluate(config: AlgorithmConfig, n: int, m: int, p: NetworkParams,
             oracle: Oracle = Oracle.ANALYTICAL) -> float:
    if oracle is Oracle.ANALYTICAL:
        return cost(config, n, m, p).total_s
    return simulate(build_schedule(config, n, 0, m), p).total_s


def expand_candidates(templates: Sequence[AlgorithmConfig], chunks: Sequence[int],
                      m: int) -> list[AlgorithmConfig]:
    """Concrete configs for message size ``m``.

    Pipelined templates expand over every chunk candidate that fits in the
    message; when none fits, the smallest candidate is used (it clamps to
    the message length at run time).
    """
    out = []
    for t in templates:
        if t.algorithm is Algorithm.CHAIN_PIPELINED:
            pool = sorted(set(chunks)) if chunks else [t.chunk_bytes]
            fitting = [c for c in pool if c <= m] or pool[:1]
            out += [AlgorithmConfig(Algorithm.CHAIN_PIPELINED, chunk_bytes=c) for c in fitting]
        else:
            out.append(t)
    return out


def _usable(config: AlgorithmConfig, n: int) -> bool:
    return not (config.algorithm is Algorithm.CHAIN_PIPELINED and n < 2)


def best_config(templates, chunks, n: int, m: int, p: NetworkParams,
                oracle: Oracle = Oracle.ANALYTICAL) -> tuple[AlgorithmConfig, float]:
    """Argmin over the expanded candidates; ties go to enum order, then smaller chunk/radix."""
    scored = [
        (evaluate(c, n, m, p, oracle), c.algorithm.order, c.chunk_bytes, c.radix_k, i, c)
        for i, c in enumerate(expand_candidates(templates, chunks, m))
        if _usable(c, n)
    ]
    if not scored:
        raise InvalidParameterError(f"no usable candidate for n={n}")
    best = min(scored)
    return best[-1], best[0]


def tune(n_list: Iterable[int], msg_sizes: Sequence[int],
         candidates: Sequence[AlgorithmConfig], chunk_candidates: Sequence[int],
         p: NetworkParams, oracle: Oracle = Oracle.ANALYTICAL) -> TuningTable:
    """Pick the best config at every (n, size) and merge equal neighbours into ranges.

    Sweep size ``s_i`` stands for ``[s_i, s_{i+1})``; the last size covers
    ``[s_last, 2*s_last)``. Merged entries keep the cost predicted at their
    lower bound.
    """
    n_list = list(n_list)
    sizes = list(msg_sizes)
    if not candidates:
        raise InvalidParameterError("candidate set is empty")
    if not n_list or not sizes:
        raise InvalidParameterError("n_list and msg_sizes must be non-empty")
    if any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] < 0:
        raise InvalidParameterError("msg_sizes must be non-negative and strictly increasing")

    bounds = sizes + [max(2 * sizes[-1], sizes[-1] + 1)]
    entries: list[TableEntry] = []
    for n in sorted(set(n_list)):
        if n < 1:
            raise InvalidParameterError(f"n must be >= 1, got {n}")
        run: TableEntry | None = None
        for i, m in enumerate(sizes):
            config, predicted = best_config(candidates, chunk_candidates, n, m, p, oracle)
            if run is not None and run.config == config:
                run = TableEntry(n, run.msg_min_bytes, bounds[i + 1], config, run.predicted_cost_s)
            else:
                if run is not None:
                    entries.append(run)
                run = TableEntry(n, m, bounds[i + 1], config, predicted)
        entries.append(run)
    return TuningTable(entries, oracle)


def select(t: TuningTable, n: int, m: int) -> AlgorithmConfig:
    """Look up the config for ``n`` ranks and an ``m``-byte message.

    Untuned node counts fall back to the nearest smaller tuned one; sizes
    outside the tuned ranges clamp to the first or last range.
    """
    if not t.entries:
        raise TuningLookupError("tuning table is empty")
    tuned = t.node_counts()
    pos = bisect.bisect_right(tuned, n)
    if pos == 0:
        raise TuningLookupError(f"n={n} is below the smallest tuned node count {tuned[0]}")
    rows = sorted(t.for_n(tuned[pos - 1]), key=lambda e: e.msg_min_bytes)
    idx = bisect.bisect_right([e.msg_min_bytes for e in rows], m) - 1
    return rows[max(idx, 0)].config


def check_table(t: TuningTable) -> None:
    """Reject tables whose per-n ranges are empty, unsorted or overlapping."""
    by_n: dict[int, list[TableEntry]] = {}
    for e in t.entries:
        if e.msg_max_bytes <= e.msg_min_bytes:
            raise TableFormatError(f"empty range [{e.msg_min_bytes}, {e.msg_max_bytes}) for n={e.n}")
        by_n.setdefault(e.n, []).append(e)
    for n, rows in by_n.items():
        for a, b in zip(rows, rows[1:]):
            if b.msg_min_bytes < a.msg_max_bytes:
                raise TableFormatError(
                    f"n={n}: range starting at {b.msg_min_bytes} overlaps or precedes "
                    f"[{a.msg_min_bytes}, {a.msg_max_bytes})"
                )


def dumps_table(t: TuningTable) -> str:
    buf = io.StringIO()
    buf.write(f"# oracle={t.oracle.value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    for e in t.entries:
        w.writerow([e.n, e.msg_min_bytes, e.msg_max_bytes, e.config.algorithm.value,
                    e.config.radix_k, e.config.chunk_bytes, repr(e.predicted_cost_s)])
    return buf.getvalue()


def loads_table(text: str) -> TuningTable:
    oracle = Oracle.ANALYTICAL
    entries: list[TableEntry] = []
    header_seen = False
    lines = text.splitlines()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key.strip() == "oracle":
                try:
                    oracle = Oracle(value.strip())
                except ValueError:
                    raise TableFormatError(f"unknown oracle {value.strip()!r}", lineno) from None
            continue
        row = next(csv.reader([line]))
        if not header_seen:
            if row != TABLE_HEADER:
                raise TableFormatError(f"expected header {','.join(TABLE_HEADER)}", lineno)
            header_seen = True
            continue
        if len(row) != len(TABLE_HEADER):
            raise TableFormatError(f"expected {len(TABLE_HEADER)} fields, got {len(row)}", lineno)
        try:
            n, lo, hi = int(row[0]), int(row[1]), int(row[2])
            config = AlgorithmConfig(Algorithm.parse(row[3]), int(row[4]), int(row[5]))
            predicted = float(row[6])
        except ValueError as exc:
            raise TableFormatError(str(exc), lineno) from None
        entries.append(TableEntry(n, lo, hi, config, predicted))
    if not header_seen:
        raise TableFormatError("missing header")
    if not entries:
        raise TableFormatError("table has no entries")
    t = TuningTable(entries, oracle)
    check_table(t)
    return t


def save_table(t: TuningTable, destination: str | Path) -> None:
    check_table(t)
    Path(destination).write_text(dumps_table(t), encoding="utf-8")


def load_table(source: str | Path) -> TuningTable:
    return loads_table(Path(source).read_text(encoding="utf-8"))


def crossovers(t: TuningTable) -> dict[int, list[tuple[int, AlgorithmConfig]]]:
    """Per n, the message sizes where the winning algorithm changes."""
    out = {}
    for n in t.node_counts():
        rows = t.for_n(n)
        out[n] = [(b.msg_min_bytes, b.config) for a, b in zip(rows, rows[1:])
                  if a.config.algorithm is not b.config.algorithm]
    return out


def power_of_two_sizes(lo: int, hi: int) -> list[int]:
    """Power-of-two sweep from ``lo`` to ``hi``; a zero lower bound adds a 0-byte point."""
    if lo < 0 or hi < lo:
        raise InvalidParameterError(f"bad size range [{lo}, {hi}]")
    sizes = [0] if lo == 0 else []
    s = 1
    while s < max(lo, 1):
        s *= 2
    while s <= hi:
        sizes.append(s)
        s *= 2
    return sizes
