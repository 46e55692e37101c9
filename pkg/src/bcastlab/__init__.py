"""Broadcast collectives as explicit schedules: cost models, simulation, tuning, execution."""

from .core import (
    BASELINE,
    Algorithm,
    AlgorithmConfig,
    ChunkSpec,
    Event,
    InvalidParameterError,
    NetworkParams,
    Recv,
    Schedule,
    Send,
    Violation,
    make_chunks,
    validate_schedule,
)
from .models import CostBreakdown, cost
from .schedules import build_schedule
from .simengine import SimResult, simulate, verify_coverage
from .tuner import Oracle, TuningTable, load_table, save_table, select, tune

__version__ = "0.1.0"
