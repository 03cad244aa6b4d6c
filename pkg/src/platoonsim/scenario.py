"""World orchestration: spawn plan, tick loop, phase machine, detection.

One run is strictly single-threaded and deterministic for a given
(config, seed).  Each tick: members report upstream through the lossy
channel, the controller answers with one action per member, delivered
actions sit in each vehicle's pedal-delay buffer until they mature, then
kinematics advance and collision/stability checks run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

from .channel import (
    DOWNLINK,
    UPLINK,
    ChannelRng,
    LossSchedule,
    PdrCurve,
    builtin_curve,
    lossless_curve,
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
from .kinematics import DelayBuffer, VehicleMode, VehicleParams, VehicleState, clamp, step_vehicle
from .metrics import RunSummary, TraceRecord, summarize

_EPS = 1e-9


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SpawnSpec:
    front_pos_m: float
    speed: float
    entry_time_s: float = 0.0


@dataclass(frozen=True)
class CollisionRecord:
    tick: int
    follower_id: int
    leader_id: int          # front vehicle of the colliding pair
    closing_speed: float


@dataclass(frozen=True)
class ScenarioConfig:
    road_length_m: float = 4000.0
    road_speed_limit: float = 36.11     # 130 km/h
    truck_count: int = 5
    desired_ivd_m: float = 5.0
    message_rate_hz: float = 80.0
    protocol: str = "dsrc"
    braking_trigger_s: float = 100.0
    acceleration_trigger_s: float = 125.0
    resume_speed: float = 22.22          # 80 km/h
    tolerance_frac: float = 0.10
    margin_mps: float = 0.4
    seed: int = 0
    stability_dwell_s: float = 1.0
    spawn_plan: Optional[Tuple[SpawnSpec, ...]] = None
    spawn_gap_m: float = 100.0           # bumper-to-bumper at spawn
    spawn_speed_frac: float = 0.8        # of resume_speed
    leader_spawn_front_m: float = 500.0
    join_catchup_mps: float = 7.0
    join_gap_gain: float = 0.5
    taper_interval_ticks: int = 0        # 0 = one pedal-delay window
    vehicle: VehicleParams = VehicleParams()
    max_time_s: float = 240.0
    stop_after_stable_s: float = 5.0
    physics_substeps: int = 1

    @property
    def dt(self) -> float:
        return 1.0 / self.message_rate_hz

    def resolved_spawn_plan(self) -> Tuple[SpawnSpec, ...]:
        if self.spawn_plan is not None:
            return self.spawn_plan
        speed = self.spawn_speed_frac * self.resume_speed
        spacing = self.spawn_gap_m + self.vehicle.length_m
        return tuple(
            SpawnSpec(front_pos_m=self.leader_spawn_front_m - i * spacing, speed=speed)
            for i in range(self.truck_count)
        )

    def validate(self) -> None:
        if self.message_rate_hz <= 0:
            raise ConfigError("message_rate_hz must be positive")
        if self.truck_count < 1:
            raise ConfigError("truck_count must be at least 1")
        if self.desired_ivd_m <= 0:
            raise ConfigError("desired_ivd_m must be positive")
        if not 0 <= self.tolerance_frac < 1:
            raise ConfigError("tolerance_frac must be in [0, 1)")
        if self.braking_trigger_s >= self.acceleration_trigger_s:
            raise ConfigError("braking_trigger_s must precede acceleration_trigger_s")
        if self.stability_dwell_s < 0:
            raise ConfigError("stability_dwell_s must be non-negative")
        if self.physics_substeps < 1:
            raise ConfigError("physics_substeps must be at least 1")
        plan = self.resolved_spawn_plan()
        if len(plan) != self.truck_count:
            raise ConfigError("spawn plan length must equal truck_count")
        for a, b in zip(plan, plan[1:]):
            gap = (a.front_pos_m - self.vehicle.length_m) - b.front_pos_m
            if gap <= 0:
                raise ConfigError("spawn positions must decrease front-to-back with positive gaps")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["spawn_plan"] = [asdict(s) for s in self.resolved_spawn_plan()]
        return doc


def pair_gap(
    leader_state: VehicleState, leader_params: VehicleParams, follower_state: VehicleState
) -> float:
    """Bumper-to-bumper gap of a consecutive pair."""
    return (leader_state.front_pos_m - leader_params.length_m) - follower_state.front_pos_m


def antenna_distance(
    pl_state: VehicleState,
    pl_params: VehicleParams,
    pm_state: VehicleState,
    pm_params: VehicleParams,
) -> float:
    pl_antenna = pl_state.front_pos_m - pl_params.antenna_offset_m
    pm_antenna = pm_state.front_pos_m - pm_params.antenna_offset_m
    return abs(pl_antenna - pm_antenna)


def detect_stability(
    trace: Sequence[TraceRecord],
    desired_ivd: float,
    tolerance_frac: float,
    dwell_s: float,
    acceleration_start_s: float,
) -> Optional[float]:
    """Earliest time (relative to acceleration start) at which every member
    gap has sat inside the tolerance band continuously for dwell_s."""
    lo = round(desired_ivd * (1 - tolerance_frac), 6)
    hi = round(desired_ivd * (1 + tolerance_frac), 6)
    by_tick: Dict[int, List[TraceRecord]] = {}
    for rec in trace:
        if rec.time_s >= acceleration_start_s - _EPS:
            by_tick.setdefault(rec.tick, []).append(rec)
    streak_start: Optional[float] = None
    for tick in sorted(by_tick):
        records = by_tick[tick]
        gaps = [r.ivd_m for r in records if r.ivd_m is not None]
        if not gaps:
            return None  # degenerate platoon without members
        t = records[0].time_s
        if all(lo - _EPS <= g <= hi + _EPS for g in gaps):
            if streak_start is None:
                streak_start = t
            if t - streak_start >= dwell_s - _EPS:
                return t - acceleration_start_s
        else:
            streak_start = None
    return None


@dataclass
class _Vehicle:
    state: VehicleState
    params: VehicleParams
    spawn: SpawnSpec
    buffer: DelayBuffer = field(default_factory=DelayBuffer)
    last_command: str = "none"
    last_command_tick: Optional[int] = None


def _apply_command(veh: _Vehicle, cmd: ActionCommand, speed_limit: float, tick: int) -> None:
    vmax = min(veh.params.max_speed, speed_limit)
    st = veh.state
    if cmd.action is Action.ACCELERATE:
        st.target_speed = clamp(st.speed + cmd.value, 0.0, vmax)
    elif cmd.action is Action.DECELERATE:
        st.target_speed = clamp(st.speed - cmd.value, 0.0, vmax)
    elif cmd.action is Action.EMERGENCY_BRAKE:
        st.target_speed = 0.0
        st.mode = VehicleMode.EMERGENCY_BRAKING
    elif cmd.action is Action.RESUME:
        st.target_speed = clamp(cmd.value, 0.0, vmax)
        if st.mode is not VehicleMode.REGULATED:
            st.mode = VehicleMode.REGULATED
    # MAINTAIN leaves the current target untouched.
    veh.last_command = cmd.action.value
    veh.last_command_tick = tick


def run(
    config: ScenarioConfig,
    curve: Optional[PdrCurve] = None,
    loss_schedule: Optional[LossSchedule] = None,
) -> Tuple[List[TraceRecord], RunSummary]:
    """Execute one seeded scenario and return its trace and summary."""
    config.validate()
    if curve is None:
        curve = builtin_curve(config.protocol)

    plan = config.resolved_spawn_plan()
    vehicles = [
        _Vehicle(
            state=VehicleState(
                id=i, front_pos_m=s.front_pos_m, speed=s.speed, target_speed=s.speed
            ),
            params=config.vehicle,
            spawn=s,
        )
        for i, s in enumerate(plan)
    ]
    descriptors = [
        {"id": v.state.id, "front_pos_m": v.state.front_pos_m, "is_truck": True}
        for v in vehicles
    ]
    leader_id = select_leader(descriptors)
    leader = vehicles[leader_id]

    controller = PlatoonController(
        desired_ivd_m=config.desired_ivd_m,
        tolerance_frac=config.tolerance_frac,
        margin_mps=config.margin_mps,
        resume_speed=config.resume_speed,
        join_catchup_mps=config.join_catchup_mps,
        join_gap_gain=config.join_gap_gain,
        taper_interval_ticks=(
            config.taper_interval_ticks
            or max(1, round(config.vehicle.reaction_time_s * config.message_rate_hz))
        ),
    )
    controller.leader_speed = leader.state.speed

    rng = ChannelRng(config.seed)
    dt = config.dt
    rate = config.message_rate_hz
    brake_tick = math.ceil(config.braking_trigger_s * rate - _EPS)
    accel_tick = math.ceil(config.acceleration_trigger_s * rate - _EPS)
    max_ticks = int(config.max_time_s * rate) + 1
    band_lo = round(config.desired_ivd_m * (1 - config.tolerance_frac), 6)
    band_hi = round(config.desired_ivd_m * (1 + config.tolerance_frac), 6)

    phase = Phase.FORMATION
    trace: List[TraceRecord] = []
    collision: Optional[CollisionRecord] = None
    streak_start: Optional[float] = None
    stable_at: Optional[float] = None
    pending_candidates = [v.state.id for v in vehicles if v.state.id != leader_id]

    def advance_phase(new: Phase) -> None:
        nonlocal phase
        if new.order > phase.order:
            phase = new
            controller.set_phase(new)

    def predecessor(vid: int) -> Optional[_Vehicle]:
        return vehicles[vid - 1] if vid > 0 else None

    for tick in range(max_ticks):
        t = tick / rate
        controller.leader_speed = leader.state.speed

        # Scenario triggers: the lead vehicle is ordered directly (the
        # controller rides in it), but its pedal delay still applies.
        if tick == brake_tick:
            advance_phase(Phase.EMERGENCY_BRAKING)
            leader.buffer.enqueue(
                ActionCommand(leader_id, Action.EMERGENCY_BRAKE, tick), t,
                leader.params.reaction_time_s,
            )
        if tick == accel_tick:
            advance_phase(Phase.ACCELERATION)
            leader.buffer.enqueue(
                ActionCommand(leader_id, Action.RESUME, tick, value=config.resume_speed), t,
                leader.params.reaction_time_s,
            )

        if phase is Phase.EMERGENCY_BRAKING and all(v.state.speed == 0.0 for v in vehicles):
            advance_phase(Phase.STANDSTILL)

        # Admission of waiting candidates (tail joins, nearest first).
        if pending_candidates and controller.leader_speed > 0:
            tail = vehicles[controller.members[-1]] if controller.members else leader
            ready = [
                CandidateInfo(
                    vehicle_id=vid,
                    distance_to_last_member_m=max(
                        pair_gap(tail.state, tail.params, vehicles[vid].state), 0.0
                    ),
                    speed=vehicles[vid].state.speed,
                )
                for vid in pending_candidates
                if t >= vehicles[vid].spawn.entry_time_s - _EPS
            ]
            for cand in eligible_candidates(controller.leader_speed, ready):
                controller.admit_member(cand.vehicle_id, vehicles[cand.vehicle_id].state.front_pos_m)
                pending_candidates.remove(cand.vehicle_id)
                tail = vehicles[controller.members[-1]]

        if phase is Phase.FORMATION and controller.members and not pending_candidates:
            if all(controller.is_joined(m) for m in controller.members):
                advance_phase(Phase.CRUISE)

        # 1. Uplink: members report position, speed and gap to predecessor.
        uplink_ok: Dict[int, bool] = {}
        for mid in controller.members:
            veh = vehicles[mid]
            pred = predecessor(mid)
            gap = pair_gap(pred.state, pred.params, veh.state)
            dist = antenna_distance(leader.state, leader.params, veh.state, veh.params)
            delivered = transmit(curve, rng, loss_schedule, dist, tick, UPLINK, mid)
            uplink_ok[mid] = delivered
            if delivered:
                controller.on_status_report(
                    StatusReport(
                        member_id=mid,
                        position_m=veh.state.front_pos_m,
                        speed=veh.state.speed,
                        ivd_m=gap,
                    ),
                    tick,
                )
        controller.age_reports()

        # 2-3. Downlink: one action per member; delivered commands wait out
        # the pedal delay in the member's buffer.
        downlink_ok: Dict[int, bool] = {}
        for mid in controller.members:
            veh = vehicles[mid]
            cmd = controller.compute_action(mid, tick)
            dist = antenna_distance(leader.state, leader.params, veh.state, veh.params)
            delivered = transmit(curve, rng, loss_schedule, dist, tick, DOWNLINK, mid)
            downlink_ok[mid] = delivered
            if delivered:
                veh.buffer.enqueue(cmd, t, veh.params.reaction_time_s)

        # 4. Actuate the newest matured command per vehicle (last-writer-wins
        # when several mature in the same tick).
        for veh in vehicles:
            cmd = veh.buffer.pop_effective(t)
            if cmd is not None:
                _apply_command(veh, cmd, config.road_speed_limit, tick)

        # 5. Kinematics.
        sub = config.physics_substeps
        for veh in vehicles:
            for _ in range(sub):
                veh.state = step_vehicle(veh.state, veh.params, dt / sub)

        # 6. Collision and stability checks (post-step state).
        gaps: Dict[int, float] = {}
        for vid in range(1, len(vehicles)):
            pred = vehicles[vid - 1]
            gap = pair_gap(pred.state, pred.params, vehicles[vid].state)
            gaps[vid] = round(gap, 6)
            if gap <= 0 and collision is None:
                collision = CollisionRecord(
                    tick=tick,
                    follower_id=vid,
                    leader_id=vid - 1,
                    closing_speed=vehicles[vid].state.speed - pred.state.speed,
                )

        if collision is None and phase.order >= Phase.ACCELERATION.order and gaps:
            if all(band_lo - _EPS <= g <= band_hi + _EPS for g in gaps.values()):
                if streak_start is None:
                    streak_start = t
                if stable_at is None and t - streak_start >= config.stability_dwell_s - _EPS:
                    stable_at = t
                    advance_phase(Phase.STABLE)
            else:
                streak_start = None

        # 7. Trace.
        for veh in vehicles:
            vid = veh.state.id
            age = tick - veh.last_command_tick if veh.last_command_tick is not None else tick
            trace.append(
                TraceRecord(
                    tick=tick,
                    time_s=round(t, 6),
                    vehicle_id=vid,
                    front_pos_m=round(veh.state.front_pos_m, 6),
                    speed_mps=round(veh.state.speed, 6),
                    ivd_m=gaps.get(vid),
                    last_command=veh.last_command,
                    command_age_ticks=age,
                    uplink_delivered=uplink_ok.get(vid, True),
                    downlink_delivered=downlink_ok.get(vid, True),
                    phase=phase.value,
                )
            )

        if collision is not None:
            break
        if leader.state.front_pos_m >= config.road_length_m:
            break
        if stable_at is not None and t - stable_at >= config.stop_after_stable_s - _EPS:
            break

    summary = summarize(trace, config)
    return trace, summary
