"""Execute schedules on real byte buffers, one thread per rank."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .core import Algorithm, AlgorithmConfig, InvalidParameterError, Schedule
from .schedules import build_schedule
from .transport import TransportError


class RankFailure(RuntimeError):
    """One or more rank bodies raised; ``failures`` maps rank -> exception."""

    def __init__(self, failures: dict[int, BaseException]):
        self.failures = dict(sorted(failures.items()))
        detail = "; ".join(f"rank {r}: {type(e).__name__}: {e}" for r, e in self.failures.items())
        super().__init__(f"{len(self.failures)} rank(s) failed: {detail}")


def launch_ranks(n: int, body: Callable[[int], Any], timeout: float | None = None) -> list[Any]:
    """Run ``body(rank)`` for every rank on its own thread and join them all."""
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    results: list[Any] = [None] * n
    failures: dict[int, BaseException] = {}
    lock = threading.Lock()

    def run(rank: int) -> None:
        try:
            results[rank] = body(rank)
        except BaseException as exc:  # noqa: BLE001 - surfaced via RankFailure
            with lock:
                failures[rank] = exc

    threads = [threading.Thread(target=run, args=(r,), name=f"rank-{r}", daemon=True)
               for r in range(n)]
    for t in threads:
        t.start()
    deadline = None if timeout is None else time.monotonic() + timeout
    for r, t in enumerate(threads):
        t.join(None if deadline is None else max(0.0, deadline - time.monotonic()))
        if t.is_alive():
            failures.setdefault(r, TimeoutError(f"rank {r} did not finish"))
    if failures:
        raise RankFailure(failures)
    return results


@dataclass
class BcastRequest:
    """One broadcast: ``buffers[r]`` is rank r's buffer; only the root's content matters."""

    n: int
    root: int
    buffers: Sequence[bytearray]
    config: AlgorithmConfig

    def __post_init__(self) -> None:
        if len(self.buffers) != self.n:
            raise InvalidParameterError(f"{len(self.buffers)} buffers for {self.n} ranks")
        sizes = {len(b) for b in self.buffers}
        if len(sizes) > 1:
            raise InvalidParameterError(f"buffer lengths differ across ranks: {sorted(sizes)}")
        if not 0 <= self.root < self.n:
            raise InvalidParameterError(f"root {self.root} outside [0, {self.n})")


@dataclass
class BcastResult:
    buffers: Sequence[bytearray]
    wall_s: float
    schedule: Schedule
    # per rank: (kind, peer, chunk_id, perf_counter timestamp) after each transport call
    event_log: list[list[tuple[str, int, int, float]]] = field(default_factory=list)


def _rank_program(s: Schedule, rank: int, buf: bytearray, ep, log: list) -> None:
    source = buf
    if rank == s.root and s.staging_bytes:
        # host-staging copy; sends read from the staged copy
        source = bytearray(buf)
    for ev in s.per_rank_ops[rank]:
        for cid in ev.chunks:
            c = s.chunks[cid]
            if ev.is_send:
                ep.send(ev.peer, cid, bytes(source[c.offset_bytes:c.end_bytes]))
            else:
                data = ep.recv(ev.peer, cid)
                if len(data) != c.length_bytes:
                    raise TransportError(
                        f"chunk {cid} from rank {ev.peer}: {len(data)} bytes, expected {c.length_bytes}"
                    )
                # the root's own buffer is authoritative; redundant copies are checked, not stored
                if rank == s.root:
                    if data != bytes(buf[c.offset_bytes:c.end_bytes]):
                        raise TransportError(f"root got a corrupted copy of chunk {cid}")
                else:
                    buf[c.offset_bytes:c.end_bytes] = data
            log.append((ev.kind.value, ev.peer, cid, time.perf_counter()))


def run_bcast(req: BcastRequest, fabric, schedule: Schedule | None = None,
              timeout: float | None = 60.0) -> BcastResult:
    """Broadcast the root's buffer into every other rank's buffer.

    Ranks start together at a barrier; the wall time runs from the barrier
    release to the last rank finishing.
    """
    m = len(req.buffers[0]) if req.buffers else 0
    if schedule is None:
        config = req.config
        if config.algorithm is Algorithm.CHAIN_PIPELINED and req.n < 2:
            # one rank has nothing to pipeline
            config = AlgorithmConfig(Algorithm.CHAIN)
        schedule = build_schedule(config, req.n, req.root, m)
    if schedule.n_ranks != req.n or schedule.root != req.root or schedule.message_bytes != m:
        raise InvalidParameterError("schedule does not match the request")
    if getattr(fabric, "n", req.n) != req.n:
        raise InvalidParameterError(f"fabric has {fabric.n} ranks, request needs {req.n}")

    barrier = threading.Barrier(req.n)
    starts = [0.0] * req.n
    ends = [0.0] * req.n
    logs: list[list] = [[] for _ in range(req.n)]

    def body(rank: int) -> None:
        ep = fabric.endpoint(rank)
        barrier.wait(timeout)
        starts[rank] = time.perf_counter()
        try:
            _rank_program(schedule, rank, req.buffers[rank], ep, logs[rank])
        except BaseException as exc:
            if hasattr(fabric, "abort"):
                fabric.abort(exc)
            if isinstance(exc, TransportError):
                raise TransportError(f"rank {rank}: {exc}") from exc
            raise
        ends[rank] = time.perf_counter()

    launch_ranks(req.n, body, timeout=timeout)
    wall = max(ends) - min(starts) if req.n else 0.0
    return BcastResult(req.buffers, wall, schedule, logs)
