"""Schedule generators, one per broadcast algorithm.

Generators work on logical ranks (root = logical 0) and relabel to physical
ranks with ``(logical + root) % n`` at the end.
"""

from __future__ import annotations

from typing import Callable

from .core import (
    Algorithm,
    AlgorithmConfig,
    ChunkSpec,
    Event,
    InvalidParameterError,
    OpKind,
    Recv,
    Schedule,
    Send,
    ceil_log,
    make_chunks,
    make_partitions,
)


def _check(n: int, root: int, m: int) -> None:
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    if not 0 <= root < n:
        raise InvalidParameterError(f"root {root} outside [0, {n})")
    if m < 0:
        raise InvalidParameterError(f"message size must be >= 0, got {m}")


def _whole(m: int) -> list[ChunkSpec]:
    return make_chunks(m, max(m, 1))


def _assemble(n: int, root: int, m: int, chunks, logical_ops, relabel: bool = True,
              **kw) -> Schedule:
    if not relabel or root == 0:
        per_rank = tuple(tuple(ops) for ops in logical_ops)
        return Schedule(n, root, m, tuple(chunks), per_rank, **kw)

    def phys(l: int) -> int:
        return (l + root) % n

    per_rank_list: list[tuple[Event, ...]] = [()] * n
    for l, ops in enumerate(logical_ops):
        per_rank_list[phys(l)] = tuple(
            Event(ev.kind, phys(ev.peer), ev.chunks, ev.round) for ev in ops
        )
    return Schedule(n, root, m, tuple(chunks), tuple(per_rank_list), **kw)


def schedule_direct(n: int, root: int, m: int) -> Schedule:
    _check(n, root, m)
    ops: list[list[Event]] = [[] for _ in range(n)]
    for l in range(1, n):
        ops[0].append(Send(l, 0))
        ops[l].append(Recv(0, 0))
    return _assemble(n, root, m, _whole(m), ops,
                     algorithm=Algorithm.DIRECT, root_self_transfer=True)


def _chain_ops(n: int, n_chunks: int, root: int) -> list[list[Event]]:
    """Chain programs already on physical ranks; the hot path of large sweeps."""
    ops: list[list[Event]] = [[] for _ in range(n)]
    if n == 1:
        return ops
    send, recv = OpKind.SEND, OpKind.RECV
    phys = [(l + root) % n for l in range(n)]
    ids = [(c,) for c in range(n_chunks)]
    ops[root] = [Event(send, phys[1], cid) for cid in ids]
    for l in range(1, n):
        me, prev = phys[l], phys[l - 1]
        if l + 1 < n:
            nxt = phys[l + 1]
            prog = []
            for cid in ids:
                prog.append(Event(recv, prev, cid))
                prog.append(Event(send, nxt, cid))
            ops[me] = prog
        else:
            ops[me] = [Event(recv, prev, cid) for cid in ids]
    return ops


def schedule_chain(n: int, root: int, m: int) -> Schedule:
    _check(n, root, m)
    return _assemble(n, root, m, _whole(m), _chain_ops(n, 1, root), relabel=False,
                     algorithm=Algorithm.CHAIN)


def schedule_chain_pipelined(n: int, root: int, m: int, chunk_bytes: int) -> Schedule:
    _check(n, root, m)
    if n < 2:
        raise InvalidParameterError(f"pipelined chain needs n >= 2, got {n}")
    chunks = make_chunks(m, chunk_bytes)
    return _assemble(n, root, m, chunks, _chain_ops(n, len(chunks), root), relabel=False,
                     algorithm=Algorithm.CHAIN_PIPELINED)


def knomial_rounds(n: int, k: int) -> list[list[tuple[int, int]]]:
    """(parent, child) logical pairs per round, top round first.

    In the round with stride ``s`` every multiple of ``k*s`` forwards to
    ``v + j*s`` for ``j = 1..k-1``; strides run from ``k**(R-1)`` down to 1,
    so the largest subtrees are fed first.
    """
    if k < 2:
        raise InvalidParameterError(f"radix must be >= 2, got {k}")
    rounds = ceil_log(n, k)
    out = []
    for r in range(rounds):
        stride = k ** (rounds - 1 - r)
        pairs = []
        for v in range(0, n, k * stride):
            for j in range(1, k):
                child = v + j * stride
                if child < n:
                    pairs.append((v, child))
        out.append(pairs)
    return out


def schedule_knomial(n: int, k: int, root: int, m: int) -> Schedule:
    _check(n, root, m)
    ops: list[list[Event]] = [[] for _ in range(n)]
    for r, pairs in enumerate(knomial_rounds(n, k)):
        for parent, child in pairs:
            ops[parent].append(Send(child, 0, round=r))
            ops[child].append(Recv(parent, 0))
    return _assemble(n, root, m, _whole(m), ops, algorithm=Algorithm.KNOMIAL)


def schedule_knomial_staged(n: int, k: int, root: int, m: int) -> Schedule:
    tree = schedule_knomial(n, k, root, m)
    return Schedule(tree.n_ranks, tree.root, tree.message_bytes, tree.chunks,
                    tree.per_rank_ops, algorithm=Algorithm.KNOMIAL_STAGED, staging_bytes=m)


def scatter_rounds(n: int) -> list[list[tuple[int, int, tuple[int, ...]]]]:
    """Range-halving binomial scatter as (src, dst, partitions) logical triples per round.

    The holder of logical range ``[lo, hi)`` hands ``[mid, hi)`` to ``mid``
    with ``mid = lo + ceil((hi - lo) / 2)``.
    """
    ranges = [(0, n)]
    out = []
    while any(hi - lo > 1 for lo, hi in ranges):
        step, nxt = [], []
        for lo, hi in ranges:
            if hi - lo > 1:
                mid = lo + (hi - lo + 1) // 2
                step.append((lo, mid, tuple(range(mid, hi))))
                nxt += [(lo, mid), (mid, hi)]
            else:
                nxt.append((lo, hi))
        out.append(step)
        ranges = nxt
    return out


def schedule_scatter_ring_allgather(n: int, root: int, m: int) -> Schedule:
    """Scatter partition i to logical rank i, then a closed ring of n - 1 steps.

    At ring step ``s`` logical rank ``i`` forwards partition ``(i - s) % n``
    to ``i + 1``. The ring is not pruned, so subtree holders and the root
    receive some partitions twice.
    """
    _check(n, root, m)
    ops: list[list[Event]] = [[] for _ in range(n)]
    for step in scatter_rounds(n):
        for src, dst, parts in step:
            ops[src].append(Send(dst, parts))
            ops[dst].append(Recv(src, parts))
    for s in range(n - 1):
        for i in range(n):
            ops[i].append(Send((i + 1) % n, (i - s) % n))
            ops[i].append(Recv((i - 1) % n, (i - 1 - s) % n))
    return _assemble(n, root, m, make_partitions(m, n), ops,
                     algorithm=Algorithm.SCATTER_RING_ALLGATHER, redundant_recvs=n > 1)


def build_schedule(config: AlgorithmConfig, n: int, root: int, m: int) -> Schedule:
    a = config.algorithm
    if a is Algorithm.DIRECT:
        return schedule_direct(n, root, m)
    if a is Algorithm.CHAIN:
        return schedule_chain(n, root, m)
    if a is Algorithm.KNOMIAL:
        return schedule_knomial(n, config.radix_k, root, m)
    if a is Algorithm.SCATTER_RING_ALLGATHER:
        return schedule_scatter_ring_allgather(n, root, m)
    if a is Algorithm.CHAIN_PIPELINED:
        return schedule_chain_pipelined(n, root, m, config.chunk_bytes)
    if a is Algorithm.KNOMIAL_STAGED:
        return schedule_knomial_staged(n, config.radix_k, root, m)
    raise InvalidParameterError(f"no generator for {a}")


GENERATORS: dict[Algorithm, Callable[..., Schedule]] = {
    Algorithm.DIRECT: schedule_direct,
    Algorithm.CHAIN: schedule_chain,
    Algorithm.KNOMIAL: schedule_knomial,
    Algorithm.SCATTER_RING_ALLGATHER: schedule_scatter_ring_allgather,
    Algorithm.CHAIN_PIPELINED: schedule_chain_pipelined,
    Algorithm.KNOMIAL_STAGED: schedule_knomial_staged,
}


# ---------------------------------------------------------------------------
# Line-oriented text form: `rank op peer chunk[+chunk...] [@round]`
# ---------------------------------------------------------------------------

def format_schedule(s: Schedule) -> str:
    algo = s.algorithm.value if s.algorithm else "-"
    lines = [
        f"# n={s.n_ranks} root={s.root} message_bytes={s.message_bytes} algorithm={algo} "
        f"staging_bytes={s.staging_bytes} self_transfer={int(s.root_self_transfer)} "
        f"redundant_recvs={int(s.redundant_recvs)}"
    ]
    lines += [f"# chunk {c.chunk_id} {c.offset_bytes} {c.length_bytes}" for c in s.chunks]
    for rank, ops in enumerate(s.per_rank_ops):
        for ev in ops:
            line = f"{rank} {ev.kind.value} {ev.peer} {'+'.join(map(str, ev.chunks))}"
            if ev.round is not None:
                line += f" @{ev.round}"
            lines.append(line)
    return "\n".join(lines) + "\n"


def parse_schedule(text: str) -> Schedule:
    header: dict[str, str] = {}
    chunks: list[ChunkSpec] = []
    events: list[tuple[int, Event]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        try:
            if line.startswith("# chunk"):
                _, _, cid, off, length = line.split()
                chunks.append(ChunkSpec(int(cid), int(off), int(length)))
            elif line.startswith("#"):
                header.update(tok.split("=", 1) for tok in line[1:].split())
            else:
                fields = line.split()
                rnd = None
                if len(fields) == 5 and fields[4].startswith("@"):
                    rnd = int(fields[4][1:])
                elif len(fields) != 4:
                    raise ValueError("expected 4 fields")
                rank, kind, peer, ids = fields[:4]
                ev = Event(OpKind(kind), int(peer), tuple(int(c) for c in ids.split("+")), rnd)
                events.append((int(rank), ev))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: cannot parse {raw!r}: {exc}") from None
    n = int(header["n"])
    per_rank: list[list[Event]] = [[] for _ in range(n)]
    for rank, ev in events:
        per_rank[rank].append(ev)
    algo = header.get("algorithm", "-")
    return Schedule(
        n, int(header["root"]), int(header["message_bytes"]), tuple(chunks),
        tuple(tuple(o) for o in per_rank),
        algorithm=None if algo == "-" else Algorithm(algo),
        staging_bytes=int(header.get("staging_bytes", 0)),
        root_self_transfer=header.get("self_transfer", "0") == "1",
        redundant_recvs=header.get("redundant_recvs", "0") == "1",
    )
