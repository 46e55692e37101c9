"""Exit criteria for the package, one test (or group) per criterion.

The terminal summary prints a PASS/FAIL line for every criterion.
"""

import math
import random
import time

import pytest

from bcastlab.core import (
    BASELINE,
    Algorithm,
    AlgorithmConfig,
    validate_schedule,
)
from bcastlab.models import (
    cost_chain,
    cost_chain_pipelined,
    cost_direct,
    cost_knomial,
    cost_knomial_staged,
    cost_scatter_ring_allgather,
)
from bcastlab.runtime import BcastRequest, run_bcast
from bcastlab.schedules import (
    schedule_chain,
    schedule_chain_pipelined,
    schedule_direct,
    schedule_knomial,
    schedule_knomial_staged,
    schedule_scatter_ring_allgather,
)
from bcastlab.simengine import simulate, verify_coverage
from bcastlab.transport import InProcFabric, SocketFabric
from bcastlab.tuner import (
    DEFAULT_CHUNKS,
    KB,
    MB,
    Oracle,
    TuningTable,
    dumps_table,
    load_table,
    loads_table,
    power_of_two_sizes,
    save_table,
    select,
    tune,
)

KNOMIAL2 = AlgorithmConfig(Algorithm.KNOMIAL, radix_k=2)
PIPE_TEMPLATE = AlgorithmConfig(Algorithm.CHAIN_PIPELINED, chunk_bytes=DEFAULT_CHUNKS[0])
SWEEP = power_of_two_sizes(1, 64 * MB)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


# -- 1 ---------------------------------------------------------------------

@pytest.mark.acceptance(1, "simulator matches closed forms on the baseline grid")
def test_c1_model_simulator_equivalence():
    p = BASELINE
    t0 = time.perf_counter()
    worst = 0.0
    checked = 0
    for n in (2, 4, 8, 16):
        for m in (KB, MB, 64 * MB):
            cases = [
                (schedule_direct(n, 0, m), cost_direct(n, m, p)),
                (schedule_chain(n, 0, m), cost_chain(n, m, p)),
                (schedule_chain_pipelined(n, 0, m, m // 8), cost_chain_pipelined(n, m, m // 8, p)),
            ]
            for k in (2, 3, 4):
                cases.append((schedule_knomial(n, k, 0, m), cost_knomial(n, k, m, p)))
                cases.append((schedule_knomial_staged(n, k, 0, m), cost_knomial_staged(n, k, m, p)))
            # all grid n are powers of two and divide every grid M
            assert m % n == 0 and n & (n - 1) == 0
            cases.append((schedule_scatter_ring_allgather(n, 0, m),
                          cost_scatter_ring_allgather(n, m, p)))
            for s, c in cases:
                err = _rel(simulate(s, p).total_s, c.total_s)
                worst = max(worst, err)
                assert err <= 1e-9, (s.algorithm, n, m, err)
                checked += 1
    elapsed = time.perf_counter() - t0
    print(f"{checked} cases, worst relative error {worst:.3e}, {elapsed:.2f} s")
    assert elapsed < 5.0


# -- 2 ---------------------------------------------------------------------

@pytest.mark.acceptance(2, "pipelined chain with C = M is exactly the chain")
def test_c2_pipelined_degenerates_to_chain():
    for n in range(2, 65):
        for m in (1, 10**3, 10**6):
            assert cost_chain_pipelined(n, m, m, BASELINE) == cost_chain(n, m, BASELINE)
            assert (cost_chain_pipelined(n, m, m, BASELINE).total_s
                    == cost_chain(n, m, BASELINE).total_s)


# -- 3 ---------------------------------------------------------------------

def _exhaustive_winner(n: int, m: int) -> tuple[str, int]:
    """Written out from the formulas, independent of the tuner and models code."""
    ts, bw = BASELINE.startup_s, BASELINE.link_bandwidth_Bps
    rounds = 0
    while 2**rounds < n:
        rounds += 1
    options = [(rounds * (ts + m / bw), 0, "knomial", 0)]
    fitting = [c for c in DEFAULT_CHUNKS if c <= m] or [min(DEFAULT_CHUNKS)]
    for c in fitting:
        eff = min(c, m)
        steps = math.ceil(m / eff) if m else 1
        options.append(((steps + n - 2) * (ts + eff / bw), 1, "chain_pipelined", c))
    best = min(options)
    return best[2], best[3]


@pytest.mark.acceptance(3, "single knomial/pipelined crossover matching an exhaustive argmin")
@pytest.mark.parametrize("n", [4, 8, 16])
def test_c3_crossover(n):
    table = tune([n], SWEEP, [KNOMIAL2, PIPE_TEMPLATE], DEFAULT_CHUNKS, BASELINE)
    winners = []
    for m in SWEEP:
        got = select(table, n, m)
        expect_algo, expect_chunk = _exhaustive_winner(n, m)
        assert got.algorithm.value == expect_algo, (n, m, got)
        if expect_algo == "chain_pipelined":
            assert got.chunk_bytes == expect_chunk, (n, m, got)
        winners.append(got.algorithm)
    switches = [i for i in range(1, len(winners)) if winners[i] != winners[i - 1]]
    assert len(switches) == 1, winners
    threshold = SWEEP[switches[0]]
    assert all(w is Algorithm.KNOMIAL for w in winners[:switches[0]])
    assert all(w is Algorithm.CHAIN_PIPELINED for w in winners[switches[0]:])
    print(f"n={n}: knomial below {threshold} B, chain_pipelined from {threshold} B")


# -- 4 ---------------------------------------------------------------------

def _random_config(rng: random.Random, algo: Algorithm, m: int) -> AlgorithmConfig:
    if algo.uses_radix:
        return AlgorithmConfig(algo, radix_k=rng.randint(2, 5))
    if algo.uses_chunk:
        return AlgorithmConfig(algo, chunk_bytes=rng.randint(1, max(m, 1)) if rng.random() < 0.5
                               else rng.choice(DEFAULT_CHUNKS))
    return AlgorithmConfig(algo)


@pytest.mark.acceptance(4, "randomized broadcasts are bitwise exact on both transports")
def test_c4_end_to_end():
    rng = random.Random(20261014)
    algos = list(Algorithm)
    t0 = time.perf_counter()
    for i in range(100):
        algo = algos[i % len(algos)]
        n = rng.randint(2, 16)
        root = rng.randrange(n)
        m = rng.choice([0, rng.randint(1, 64), rng.randint(1, MB)])
        config = _random_config(rng, algo, m)
        payload = rng.randbytes(m)
        for fabric_cls in (InProcFabric, SocketFabric):
            buffers = [bytearray(payload) if r == root else bytearray(rng.randbytes(m))
                       for r in range(n)]
            with fabric_cls(n) as fabric:
                res = run_bcast(BcastRequest(n, root, buffers, config), fabric)
            bad = [r for r, b in enumerate(res.buffers) if bytes(b) != payload]
            assert not bad, (fabric_cls.name, config, n, root, m, bad)
    elapsed = time.perf_counter() - t0
    print(f"200 broadcasts in {elapsed:.2f} s")
    assert elapsed < 60.0


# -- 5 ---------------------------------------------------------------------

def _check(s) -> None:
    bad = validate_schedule(s)
    assert bad is None, (s.algorithm, s.n_ranks, s.root, len(s.chunks), bad)
    assert verify_coverage(s), (s.algorithm, s.n_ranks, s.root, len(s.chunks))


@pytest.mark.acceptance(5, "every generated schedule is valid and covering")
@pytest.mark.parametrize("family", ["direct", "chain", "knomial", "knomial_staged",
                                    "scatter_ring_allgather", "chain_pipelined"])
def test_c5_schedule_validity(family):
    count = 0
    for n in range(1, 65):
        for root in range(n):
            if family == "direct":
                for m in (0, 1000):
                    _check(schedule_direct(n, root, m))
                    count += 1
            elif family == "chain":
                for m in (0, 1000):
                    _check(schedule_chain(n, root, m))
                    count += 1
            elif family in ("knomial", "knomial_staged"):
                gen = schedule_knomial if family == "knomial" else schedule_knomial_staged
                for k in (2, 3, 4, 8):
                    _check(gen(n, k, root, 1000))
                    count += 1
            elif family == "scatter_ring_allgather":
                # partition count is n; m < n leaves some partitions empty
                for m in (n - 1, 3 * n + 1):
                    _check(schedule_scatter_ring_allgather(n, root, m))
                    count += 1
            else:
                if n < 2:
                    continue
                for chunks in range(1, 33):
                    # odd roots get a short trailing chunk
                    m = 7 * chunks - 3 * (root % 2)
                    s = schedule_chain_pipelined(n, root, m, 7)
                    assert len(s.chunks) == chunks
                    _check(s)
                    count += 1
    print(f"{family}: {count} schedules, zero failures")


# -- 6 ---------------------------------------------------------------------

def _generated_tables() -> list[TuningTable]:
    wide = [KNOMIAL2, AlgorithmConfig(Algorithm.KNOMIAL, radix_k=4), PIPE_TEMPLATE,
            AlgorithmConfig(Algorithm.SCATTER_RING_ALLGATHER), AlgorithmConfig(Algorithm.DIRECT)]
    return [
        tune([4, 8, 16], SWEEP, [KNOMIAL2, PIPE_TEMPLATE], DEFAULT_CHUNKS, BASELINE),
        tune([2, 3, 5, 32], power_of_two_sizes(0, 16 * MB), wide, DEFAULT_CHUNKS, BASELINE),
        tune([2, 6], power_of_two_sizes(1, 256 * KB), wide, [8 * KB, 64 * KB], BASELINE,
             Oracle.SIMULATED),
    ]


@pytest.mark.acceptance(6, "tuning tables round-trip and select is total")
def test_c6_roundtrip_and_totality(tmp_path):
    rng = random.Random(6)
    probes = sorted({0, 1, 2**32 - 1}
                    | {2**e + d for e in range(32) for d in (-1, 0, 1)}
                    | {rng.randrange(2**32) for _ in range(2000)})
    assert all(0 <= m < 2**32 for m in probes)
    for i, table in enumerate(_generated_tables()):
        path = tmp_path / f"t{i}.csv"
        save_table(table, path)
        back = load_table(path)
        assert back == table
        assert dumps_table(back) == dumps_table(table)
        assert loads_table(dumps_table(table)) == table

        lo = min(table.node_counts())
        for n in list(range(lo, lo + 70)) + [1000, 10**6]:
            for m in probes:
                config = select(back, n, m)
                assert isinstance(config, AlgorithmConfig)


# -- 7 ---------------------------------------------------------------------

@pytest.mark.acceptance(7, "tuned pipelined chain beats the plain chain by 2x at 64 MB")
@pytest.mark.parametrize("n", [8, 16])
def test_c7_pipelining_benefit(n):
    m = 64 * MB
    table = tune([n], SWEEP, [KNOMIAL2, PIPE_TEMPLATE], DEFAULT_CHUNKS, BASELINE)
    # the chunk the tuner would pick for a pipelined chain at this size
    pipe_table = tune([n], [m], [PIPE_TEMPLATE], DEFAULT_CHUNKS, BASELINE)
    chosen = select(pipe_table, n, m)
    assert select(table, n, m) == chosen
    pipelined = simulate(schedule_chain_pipelined(n, 0, m, chosen.chunk_bytes), BASELINE).total_s
    chain = simulate(schedule_chain(n, 0, m), BASELINE).total_s
    ratio = chain / pipelined
    print(f"n={n}: chunk {chosen.chunk_bytes} B, chain {chain:.4f} s, "
          f"pipelined {pipelined:.4f} s, speedup {ratio:.2f}x")
    assert ratio >= 2.0
