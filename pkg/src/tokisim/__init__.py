"""Deterministic discrete-event simulator for partitioned multicore RTOS experiments."""

from tokisim.model import (
    ChannelConfig,
    ConfigError,
    CoreConfig,
    Deployment,
    ExecutionProfile,
    InterruptSource,
    Platform,
    RegulatorConfig,
    Segment,
    Task,
    ValidationReport,
    derive_priorities,
    parse_deployment,
    serialize_deployment,
    validate_deployment,
)
from tokisim.engine import SimulationFault, run
from tokisim.trace import MetricsReport, TraceEvent, compare_runs, compute_metrics

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig",
    "ConfigError",
    "CoreConfig",
    "Deployment",
    "ExecutionProfile",
    "InterruptSource",
    "MetricsReport",
    "Platform",
    "RegulatorConfig",
    "Segment",
    "SimulationFault",
    "Task",
    "TraceEvent",
    "ValidationReport",
    "compare_runs",
    "compute_metrics",
    "derive_priorities",
    "parse_deployment",
    "run",
    "serialize_deployment",
    "validate_deployment",
]
