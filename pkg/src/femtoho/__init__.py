"""Handover control toolkit for integrated femtocell/macrocell WCDMA networks."""

from .admission import CacThresholds, Decision, HandoverContext, decide, guard_admission
from .mobility import FemtocellGeometry, MobilityParams, residence_time, sample_entry
from .queuing import (
    BlockingReport,
    GuardChannelParams,
    blocking_report,
    ctmc_oracle,
    erlang_b,
    handover_blocking,
    new_call_blocking,
    optimize_k,
    stationary_distribution,
    sweep_guard_threshold,
)
from .signaling import FlowKind, build_flow_script, execute_flow, precedence_check, validate_trace
from .sim import (
    ScenarioConfig,
    run_blocking_des,
    run_unnecessary_handover_experiment,
    sweep_threshold_time,
)

__version__ = "0.1.0"
