"""Deterministic platoon-over-lossy-V2V simulator."""

from .channel import (
    ChannelRng,
    CurveError,
    LossEntry,
    LossSchedule,
    PdrCurve,
    builtin_curve,
    load_curve,
    load_curve_file,
    lossless_curve,
    pdr_at_distance,
    transmit,
)
from .controller import (
    Action,
    ActionCommand,
    CandidateInfo,
    Phase,
    PlatoonController,
    StatusReport,
    eligible_candidates,
    select_leader,
)
from .kinematics import DelayBuffer, VehicleMode, VehicleParams, VehicleState, step_vehicle
from .metrics import (
    RunSummary,
    SweepSummary,
    TraceRecord,
    aggregate,
    emit_plot,
    emit_summary_csv,
    emit_trace_csv,
    load_trace_csv,
    summarize,
)
from .scenario import (
    CollisionRecord,
    ConfigError,
    ScenarioConfig,
    SpawnSpec,
    antenna_distance,
    detect_stability,
    pair_gap,
    run,
)

__version__ = "0.1.0"
