"""Domain types shared across the package: link parameters, chunking, schedules."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence


class InvalidParameterError(ValueError):
    """Raised when an argument falls outside an operation's domain."""


@dataclass(frozen=True)
class NetworkParams:
    """Modeled link: per-transfer startup, link bandwidth, host-staging bandwidth."""

    startup_s: float
    link_bandwidth_Bps: float
    staging_bandwidth_Bps: float = 1e10

    def __post_init__(self) -> None:
        if not self.startup_s >= 0:
            raise InvalidParameterError(f"startup_s must be >= 0, got {self.startup_s}")
        if not self.link_bandwidth_Bps > 0:
            raise InvalidParameterError(
                f"link_bandwidth_Bps must be > 0, got {self.link_bandwidth_Bps}"
            )
        if not self.staging_bandwidth_Bps > 0:
            raise InvalidParameterError(
                f"staging_bandwidth_Bps must be > 0, got {self.staging_bandwidth_Bps}"
            )


# t_s = 1 us, B = 1 GB/s, B_PCIe = 10 GB/s
BASELINE = NetworkParams(startup_s=1e-6, link_bandwidth_Bps=1e9, staging_bandwidth_Bps=1e10)


class Algorithm(enum.Enum):
    # Declaration order is the tuner's tie-break order.
    DIRECT = "direct"
    CHAIN = "chain"
    KNOMIAL = "knomial"
    SCATTER_RING_ALLGATHER = "scatter_ring_allgather"
    CHAIN_PIPELINED = "chain_pipelined"
    KNOMIAL_STAGED = "knomial_staged"

    @property
    def order(self) -> int:
        return list(Algorithm).index(self)

    @property
    def uses_radix(self) -> bool:
        return self in (Algorithm.KNOMIAL, Algorithm.KNOMIAL_STAGED)

    @property
    def uses_chunk(self) -> bool:
        return self is Algorithm.CHAIN_PIPELINED

    @classmethod
    def parse(cls, name: str) -> "Algorithm":
        try:
            return cls(name.strip().lower())
        except ValueError:
            known = ", ".join(a.value for a in cls)
            raise InvalidParameterError(f"unknown algorithm {name!r} (known: {known})") from None


@dataclass(frozen=True)
class AlgorithmConfig:
    """An algorithm plus its free parameters.

    ``radix_k`` and ``chunk_bytes`` are zero when the algorithm does not use them.
    """

    algorithm: Algorithm
    radix_k: int = 0
    chunk_bytes: int = 0

    def __post_init__(self) -> None:
        if self.algorithm.uses_radix and self.radix_k < 2:
            raise InvalidParameterError(f"{self.algorithm.value} needs radix_k >= 2")
        if self.algorithm.uses_chunk and self.chunk_bytes < 1:
            raise InvalidParameterError(f"{self.algorithm.value} needs chunk_bytes >= 1")

    @classmethod
    def make(cls, algorithm: Algorithm | str, radix_k: int = 0, chunk_bytes: int = 0) -> "AlgorithmConfig":
        """Build a config, zeroing the parameters the algorithm ignores."""
        if isinstance(algorithm, str):
            algorithm = Algorithm.parse(algorithm)
        return cls(
            algorithm,
            radix_k if algorithm.uses_radix else 0,
            chunk_bytes if algorithm.uses_chunk else 0,
        )

    def label(self) -> str:
        if self.algorithm.uses_radix:
            return f"{self.algorithm.value}(k={self.radix_k})"
        if self.algorithm.uses_chunk:
            return f"{self.algorithm.value}(C={self.chunk_bytes})"
        return self.algorithm.value


@dataclass(frozen=True)
class ChunkSpec:
    chunk_id: int
    offset_bytes: int
    length_bytes: int

    @property
    def end_bytes(self) -> int:
        return self.offset_bytes + self.length_bytes


def make_chunks(message_bytes: int, chunk_bytes: int) -> list[ChunkSpec]:
    """Split ``[0, message_bytes)`` into contiguous chunks of ``chunk_bytes``.

    The last chunk may be shorter. A chunk size larger than the message is
    clamped to one chunk, and an empty message yields one zero-length chunk.

    >>> [(c.offset_bytes, c.length_bytes) for c in make_chunks(10, 4)]
    [(0, 4), (4, 4), (8, 2)]
    """
    if chunk_bytes < 1:
        raise InvalidParameterError(f"chunk_bytes must be >= 1, got {chunk_bytes}")
    if message_bytes < 0:
        raise InvalidParameterError(f"message_bytes must be >= 0, got {message_bytes}")
    if message_bytes == 0:
        return [ChunkSpec(0, 0, 0)]
    count = -(-message_bytes // chunk_bytes)
    return [
        ChunkSpec(i, i * chunk_bytes, min(chunk_bytes, message_bytes - i * chunk_bytes))
        for i in range(count)
    ]


def make_partitions(message_bytes: int, parts: int) -> list[ChunkSpec]:
    """Split a message into ``parts`` near-equal contiguous pieces (sizes differ by at most 1)."""
    if parts < 1:
        raise InvalidParameterError(f"parts must be >= 1, got {parts}")
    base, extra = divmod(message_bytes, parts)
    out = []
    offset = 0
    for i in range(parts):
        length = base + (1 if i < extra else 0)
        out.append(ChunkSpec(i, offset, length))
        offset += length
    return out


class OpKind(enum.Enum):
    SEND = "send"
    RECV = "recv"


class Event(NamedTuple):
    """One point-to-point operation in a rank's program.

    ``chunks`` is usually a single chunk id. Tree scatters move several
    contiguous partitions as one transfer, so an event may carry more.
    Sends on one rank sharing a non-None ``round`` are issued together on
    separate sub-ports (k-nomial fan-out).
    """

    kind: OpKind
    peer: int
    chunks: tuple[int, ...]
    round: int | None = None

    @property
    def is_send(self) -> bool:
        return self.kind is OpKind.SEND

    def __str__(self) -> str:
        tag = "S" if self.is_send else "R"
        return f"{tag}({self.peer},{'+'.join(map(str, self.chunks))})"


def _as_chunks(chunk: int | Iterable[int]) -> tuple[int, ...]:
    if isinstance(chunk, int):
        return (chunk,)
    return tuple(chunk)


def Send(to: int, chunk: int | Iterable[int], round: int | None = None) -> Event:
    return Event(OpKind.SEND, to, _as_chunks(chunk), round)


def Recv(src: int, chunk: int | Iterable[int]) -> Event:
    return Event(OpKind.RECV, src, _as_chunks(chunk))


@dataclass(frozen=True)
class Schedule:
    """Per-rank ordered event lists realizing one broadcast.

    ``staging_bytes`` is a root-local copy billed at the staging bandwidth
    before the root's first send. ``root_self_transfer`` bills the root one
    extra full-message transfer first (the n-fold direct loop).
    ``redundant_recvs`` lets ranks, the root included, receive chunks they
    already hold; a closed ring allgather does this by design.
    """

    n_ranks: int
    root: int
    message_bytes: int
    chunks: tuple[ChunkSpec, ...]
    per_rank_ops: tuple[tuple[Event, ...], ...]
    algorithm: Algorithm | None = None
    staging_bytes: int = 0
    root_self_transfer: bool = False
    redundant_recvs: bool = False

    def chunk_bytes(self, ids: Sequence[int]) -> int:
        return sum(self.chunks[c].length_bytes for c in ids)

    def event_count(self) -> int:
        return sum(len(ops) for ops in self.per_rank_ops)

    def sends(self) -> list[tuple[int, int, tuple[int, ...]]]:
        """All (src, dst, chunks) send triples, in rank then program order."""
        return [
            (rank, ev.peer, ev.chunks)
            for rank, ops in enumerate(self.per_rank_ops)
            for ev in ops
            if ev.is_send
        ]


@dataclass(frozen=True)
class Violation:
    rank: int
    event_index: int
    message: str

    def __str__(self) -> str:
        return f"rank {self.rank}, event {self.event_index}: {self.message}"


def validate_schedule(s: Schedule) -> Violation | None:
    """Check the structural invariants of a schedule.

    Returns None when the schedule is well formed, otherwise the first
    violation encountered (rank-major, then program order). Rank -1 marks
    schedule-level problems.
    """
    n = s.n_ranks
    if n < 1:
        return Violation(-1, -1, f"n_ranks must be >= 1, got {n}")
    if not 0 <= s.root < n:
        return Violation(-1, -1, f"root {s.root} outside [0, {n})")
    if len(s.per_rank_ops) != n:
        return Violation(-1, -1, f"{len(s.per_rank_ops)} op lists for {n} ranks")

    offset = 0
    for i, c in enumerate(s.chunks):
        if c.chunk_id != i or c.offset_bytes != offset or c.length_bytes < 0:
            return Violation(-1, -1, f"chunk {i} breaks contiguous coverage")
        offset = c.end_bytes
    if not s.chunks or offset != s.message_bytes:
        return Violation(-1, -1, f"chunks cover {offset} of {s.message_bytes} bytes")
    n_chunks = len(s.chunks)

    sends: dict = {}
    recvs: dict = {}
    first_send: dict = {}
    send_kind = OpKind.SEND
    for rank, ops in enumerate(s.per_rank_ops):
        is_root = rank == s.root
        owned = set(range(n_chunks)) if is_root else set()
        received = [0] * n_chunks
        for idx, ev in enumerate(ops):
            peer, ids = ev.peer, ev.chunks
            if not 0 <= peer < n or peer == rank:
                return Violation(rank, idx, f"bad peer {peer}")
            if not ids or min(ids) < 0 or max(ids) >= n_chunks:
                return Violation(rank, idx, f"bad chunk ids {ids}")
            if ev.kind is send_kind:
                if not owned.issuperset(ids):
                    missing = [c for c in ids if c not in owned]
                    return Violation(rank, idx, f"sends chunk {missing[0]} before owning it")
                key = (rank, peer, ids)
                if key in sends:
                    sends[key] += 1
                else:
                    sends[key] = 1
                    first_send[key] = (rank, idx)
            else:
                if is_root and not s.redundant_recvs:
                    return Violation(rank, idx, "root must not receive")
                for c in ids:
                    received[c] += 1
                owned.update(ids)
                key = (peer, rank, ids)
                recvs[key] = recvs.get(key, 0) + 1
        if not is_root:
            for c, times in enumerate(received):
                if times < 1 or (times > 1 and not s.redundant_recvs):
                    return Violation(rank, len(ops), f"receives chunk {c} {times} times")

    for key, count in sends.items():
        if recvs.get(key, 0) != count:
            r, idx = first_send[key]
            return Violation(r, idx, f"send to {key[1]} of {key[2]} has no matching recv")
    for key, count in recvs.items():
        if sends.get(key, 0) != count:
            src, dst, chunks = key
            idx = next(i for i, ev in enumerate(s.per_rank_ops[dst])
                       if not ev.is_send and ev.peer == src and ev.chunks == chunks)
            return Violation(dst, idx, f"recv from {src} of {chunks} has no matching send")
    return None


def ceil_log(n: int, k: int) -> int:
    """Exact integer ceil(log_k n) for n >= 1, k >= 2."""
    if n < 1 or k < 2:
        raise InvalidParameterError(f"ceil_log needs n >= 1 and k >= 2, got n={n}, k={k}")
    rounds, reach = 0, 1
    while reach < n:
        reach *= k
        rounds += 1
    return rounds
