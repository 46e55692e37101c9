"""Closed-form broadcast cost models.

Every function returns a :class:`CostBreakdown` whose terms separate the
startup-proportional part from the bandwidth part (and the host-staging copy
where one exists). Units are bytes, bytes/second and seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    Algorithm,
    AlgorithmConfig,
    InvalidParameterError,
    NetworkParams,
    ceil_log,
    make_chunks,
)


@dataclass(frozen=True)
class CostBreakdown:
    startup_term_s: float
    bandwidth_term_s: float
    staging_term_s: float = 0.0

    def __post_init__(self) -> None:
        for name in ("startup_term_s", "bandwidth_term_s", "staging_term_s"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0")

    @property
    def total_s(self) -> float:
        return self.startup_term_s + self.bandwidth_term_s + self.staging_term_s


def _check_n(n: int, minimum: int = 1) -> None:
    if n < minimum:
        raise InvalidParameterError(f"n must be >= {minimum}, got {n}")


def _check_m(m: int) -> None:
    if m < 0:
        raise InvalidParameterError(f"message size must be >= 0, got {m}")


def _steps(count: int, m: float, p: NetworkParams) -> CostBreakdown:
    # count * (t_s + m/B), kept as two terms
    return CostBreakdown(count * p.startup_s, count * (m / p.link_bandwidth_Bps))


def cost_direct(n: int, m: int, p: NetworkParams) -> CostBreakdown:
    """Root loops over point-to-point sends: n steps of one full message.

    The factor is n, not n - 1, so n = 1 still costs one startup.
    """
    _check_n(n)
    _check_m(m)
    return _steps(n, m, p)


def cost_chain(n: int, m: int, p: NetworkParams) -> CostBreakdown:
    _check_n(n)
    _check_m(m)
    return _steps(n - 1, m, p)


def cost_knomial(n: int, k: int, m: int, p: NetworkParams) -> CostBreakdown:
    _check_n(n)
    _check_m(m)
    if k < 2:
        raise InvalidParameterError(f"radix must be >= 2, got {k}")
    return _steps(ceil_log(n, k), m, p)


def cost_scatter_ring_allgather(n: int, m: int, p: NetworkParams) -> CostBreakdown:
    """Binomial scatter then ring allgather.

    log2 startups and (n-1)/n of the message for the scatter, plus n - 1 ring
    steps each moving one partition.
    """
    _check_n(n)
    _check_m(m)
    startup = (ceil_log(n, 2) + n - 1) * p.startup_s
    bandwidth = 2 * ((n - 1) / n) * (m / p.link_bandwidth_Bps)
    return CostBreakdown(startup, bandwidth)


def cost_chain_pipelined(n: int, m: int, c: int, p: NetworkParams) -> CostBreakdown:
    """Chunked chain: (ceil(M/C) + n - 2) stages, each one chunk transfer.

    Chunk sizes above the message length clamp to the message, so C = M
    reproduces :func:`cost_chain` exactly. A short tail chunk is billed as a
    full one.
    """
    _check_n(n, 2)
    _check_m(m)
    if c < 1:
        raise InvalidParameterError(f"chunk size must be >= 1, got {c}")
    c = min(c, m)
    stages = len(make_chunks(m, max(c, 1))) + (n - 2)
    return _steps(stages, c, p)


def cost_knomial_staged(n: int, k: int, m: int, p: NetworkParams) -> CostBreakdown:
    tree = cost_knomial(n, k, m, p)
    return CostBreakdown(tree.startup_term_s, tree.bandwidth_term_s, m / p.staging_bandwidth_Bps)


def cost(config: AlgorithmConfig, n: int, m: int, p: NetworkParams) -> CostBreakdown:
    """Dispatch to the model for ``config.algorithm``."""
    a = config.algorithm
    if a is Algorithm.DIRECT:
        return cost_direct(n, m, p)
    if a is Algorithm.CHAIN:
        return cost_chain(n, m, p)
    if a is Algorithm.KNOMIAL:
        return cost_knomial(n, config.radix_k, m, p)
    if a is Algorithm.SCATTER_RING_ALLGATHER:
        return cost_scatter_ring_allgather(n, m, p)
    if a is Algorithm.CHAIN_PIPELINED:
        return cost_chain_pipelined(n, m, config.chunk_bytes, p)
    if a is Algorithm.KNOMIAL_STAGED:
        return cost_knomial_staged(n, config.radix_k, m, p)
    raise InvalidParameterError(f"no model for {a}")
