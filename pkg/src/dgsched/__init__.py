"""Delay-guaranteed cross-layer scheduling for multi-hop wireless networks."""

from .engine import Algorithm, lyapunov_trace, run, run_bp_baseline
from .metrics import MetricsReport, check_qos, emit_report
from .model import (
    Arrival,
    FlowSpec,
    InterferenceModel,
    ModelError,
    NetworkModel,
    SchedulerKind,
    SimConfig,
    Variant,
    dump_model,
    load_model,
    validate,
)
from .oracle import compute_constants, solve_capacity_lp

__all__ = [
    "Algorithm", "Arrival", "FlowSpec", "InterferenceModel", "MetricsReport", "ModelError",
    "NetworkModel", "SchedulerKind", "SimConfig", "Variant", "check_qos", "compute_constants",
    "dump_model", "emit_report", "load_model", "lyapunov_trace", "run", "run_bp_baseline",
    "solve_capacity_lp", "validate",
]
