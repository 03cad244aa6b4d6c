"""Centralized platoon controller resident in the lead vehicle.

Gap regulation is bang-bang: each member is told to accelerate or
decelerate by a fixed speed margin whenever its reported gap leaves a
+/-10% tolerance band around the desired inter-vehicle distance, and to
maintain otherwise.  Members still approaching the platoon tail get an
absolute catch-up speed that tapers with the remaining gap so they merge
without overshooting into their predecessor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence


class Action(Enum):
    ACCELERATE = "accelerate"
    DECELERATE = "decelerate"
    MAINTAIN = "maintain"
    EMERGENCY_BRAKE = "emergency_brake"
    RESUME = "resume"


@dataclass(frozen=True)
class ActionCommand:
    member_id: int
    action: Action
    issue_tick: int
    value: Optional[float] = None  # margin for accel/decel, target speed for resume


@dataclass(frozen=True)
class StatusReport:
    member_id: int
    position_m: float  # front bumper
    speed: float
    ivd_m: float       # gap to the preceding vehicle (rear bumper to own front)


@dataclass(frozen=True)
class CandidateInfo:
    vehicle_id: int
    distance_to_last_member_m: float
    speed: float

    def __post_init__(self) -> None:
        if self.distance_to_last_member_m < 0:
            raise ValueError("candidate distance must be non-negative")


class LeaderSelectionError(ValueError):
    pass


class UnknownMemberError(KeyError):
    pass


class DuplicateMemberError(ValueError):
    pass


def select_leader(vehicles: Sequence[dict]) -> int:
    """Pick the frontmost truck from descriptors with keys id, front_pos_m, is_truck."""
    trucks = [v for v in vehicles if v.get("is_truck", False)]
    if not trucks:
        raise LeaderSelectionError("no truck available to lead the platoon")
    return max(trucks, key=lambda v: v["front_pos_m"])["id"]


def eligible_candidates(
    platoon_speed: float, candidates: Sequence[CandidateInfo]
) -> List[CandidateInfo]:
    """Filter to candidates within +/-25% of the platoon speed, nearest first."""
    if platoon_speed <= 0:
        raise ValueError("platoon_speed must be positive")
    lo, hi = 0.75 * platoon_speed, 1.25 * platoon_speed
    ok = [c for c in candidates if lo <= c.speed <= hi]
    return sorted(ok, key=lambda c: (c.distance_to_last_member_m, c.vehicle_id))


class Phase(Enum):
    FORMATION = "formation"
    CRUISE = "cruise"
    EMERGENCY_BRAKING = "emergency_braking"
    STANDSTILL = "standstill"
    ACCELERATION = "acceleration"
    STABLE = "stable"

    @property
    def order(self) -> int:
        return _PHASE_ORDER[self]


_PHASE_ORDER = {p: i for i, p in enumerate(Phase)}

# Phases in which the band rule drives regulation of joined members.
_REGULATING_PHASES = (Phase.FORMATION, Phase.CRUISE, Phase.ACCELERATION, Phase.STABLE)


@dataclass
class PlatoonController:
    """Per-run controller state machine (one instance per simulation)."""

    desired_ivd_m: float = 5.0
    tolerance_frac: float = 0.10
    margin_mps: float = 0.4
    resume_speed: float = 22.22
    # Joining maneuver: absolute catch-up over the platoon speed, tapering
    # linearly with the remaining gap so merges end at low closing speed.
    # A member whose gap balloons past rejoin_gap_factor * desired drops back
    # into this regime until it is near the band again.
    join_catchup_mps: float = 7.0
    join_gap_gain: float = 0.5  # (m/s) of closing speed per metre of excess gap
    rejoin_gap_factor: float = 1.4
    collapse_gap_factor: float = 0.6
    collapse_horizon_s: float = 1.0
    join_speed_tol_mps: float = 0.05
    # Large catch-up terms are quantised to this step so that far-range
    # commands form a staircase (a repeated command is a no-op, which keeps
    # the merge robust to sporadic loss at long antenna distances); small
    # corrections below catchup_fine_mps stay continuous for the final trim.
    catchup_step_mps: float = 0.25
    catchup_fine_mps: float = 1.0
    # Ticks between joining-maneuver speed targets while the leader is still
    # ramping up (the message rate times the member reaction time); 1
    # disables throttling.
    taper_interval_ticks: int = 1

    members: List[int] = field(default_factory=list)  # front to back
    phase: Phase = Phase.FORMATION
    leader_speed: float = 0.0

    _reports: Dict[int, StatusReport] = field(default_factory=dict)
    _report_age: Dict[int, int] = field(default_factory=dict)
    _positions: Dict[int, float] = field(default_factory=dict)
    _joined: Dict[int, bool] = field(default_factory=dict)
    _resume_pending: Dict[int, bool] = field(default_factory=dict)
    _taper_tick: Dict[int, int] = field(default_factory=dict)
    unknown_report_drops: int = 0

    @property
    def band(self) -> tuple:
        d = self.desired_ivd_m
        return (d * (1 - self.tolerance_frac), d * (1 + self.tolerance_frac))

    # -- membership ---------------------------------------------------------

    def admit_member(
        self,
        candidate_id: int,
        front_pos_m: float,
        position_hint: Optional[float] = None,
    ) -> None:
        """Append at the tail, or merge at the slot implied by position_hint."""
        if candidate_id in self.members:
            raise DuplicateMemberError(f"member {candidate_id} already admitted")
        if position_hint is None:
            self.members.append(candidate_id)
        else:
            idx = len(self.members)
            for i, mid in enumerate(self.members):
                if self._positions.get(mid, float("-inf")) < position_hint:
                    idx = i
                    break
            self.members.insert(idx, candidate_id)
        self._positions[candidate_id] = front_pos_m
        self._joined[candidate_id] = False
        self._resume_pending[candidate_id] = False

    # -- uplink -------------------------------------------------------------

    def on_status_report(self, report: StatusReport, tick: int) -> None:
        if report.member_id not in self.members:
            self.unknown_report_drops += 1
            return
        self._reports[report.member_id] = report
        self._report_age[report.member_id] = 0
        self._positions[report.member_id] = report.position_m
        band_lo, band_hi = self.band
        speed_matched = abs(report.speed - self.leader_speed) <= self.join_speed_tol_mps
        # While the platoon speed itself is still ramping up, members keep
        # tracking it through the joining maneuver instead of the band rule.
        ramping = self.phase is Phase.ACCELERATION and (
            abs(self.leader_speed - self.resume_speed) > self.join_speed_tol_mps
        )
        # Project the gap one horizon ahead using the closing speed toward the
        # preceding vehicle, so runaway approaches are caught before the gap
        # has actually collapsed.
        closing = max(report.speed - self._preceding_speed(report.member_id), 0.0)
        projected = report.ivd_m - closing * self.collapse_horizon_s
        if band_lo <= report.ivd_m <= band_hi and speed_matched and not ramping:
            self._joined[report.member_id] = True
        elif (
            report.ivd_m > self.rejoin_gap_factor * self.desired_ivd_m
            or projected < self.collapse_gap_factor * self.desired_ivd_m
        ):
            # A gap this far out of band means band regulation has lost the
            # member; drop it back to the joining maneuver, which steers on
            # absolute speed and so can shed relative speed.
            if self._joined.get(report.member_id, False):
                self._taper_tick.pop(report.member_id, None)
            self._joined[report.member_id] = False

    def _preceding_speed(self, member_id: int) -> float:
        """Last known speed of the vehicle directly ahead of a member."""
        idx = self.members.index(member_id)
        if idx == 0:
            return self.leader_speed
        prev = self._reports.get(self.members[idx - 1])
        return prev.speed if prev is not None else self.leader_speed

    def age_reports(self) -> None:
        """Called once per tick; lost reports leave stale values with growing age."""
        for mid in self._report_age:
            self._report_age[mid] += 1

    def last_report(self, member_id: int) -> Optional[StatusReport]:
        return self._reports.get(member_id)

    def report_age(self, member_id: int) -> Optional[int]:
        return self._report_age.get(member_id)

    def is_joined(self, member_id: int) -> bool:
        return self._joined.get(member_id, False)

    # -- phase --------------------------------------------------------------

    def set_phase(self, phase: Phase) -> None:
        if phase is self.phase:
            return
        self.phase = phase
        if phase is Phase.ACCELERATION:
            # Everyone restarts from standstill: issue the resume target once
            # and track the ramp through the joining maneuver, which follows
            # the lead vehicle's actual speed; band regulation takes over
            # again as members re-join at cruise speed.
            for mid in self.members:
                self._resume_pending[mid] = True
                self._joined[mid] = False
            self._taper_tick.clear()

    # -- downlink -----------------------------------------------------------

    def compute_action(self, member_id: int, tick: int) -> ActionCommand:
        """One action per member per tick, from its last known state and the phase."""
        if member_id not in self.members:
            raise UnknownMemberError(member_id)

        if self.phase in (Phase.EMERGENCY_BRAKING, Phase.STANDSTILL):
            return ActionCommand(member_id, Action.EMERGENCY_BRAKE, tick)

        if self._resume_pending.get(member_id, False):
            self._resume_pending[member_id] = False
            return ActionCommand(member_id, Action.RESUME, tick, value=self.resume_speed)

        report = self._reports.get(member_id)
        if report is None:
            return ActionCommand(member_id, Action.MAINTAIN, tick)

        if not self._joined.get(member_id, False):
            # Joining maneuver: absolute speed offset from the platoon speed,
            # proportional to the gap error so the member glides onto the
            # desired gap at matched speed (also the recovery path when a
            # gap has ballooned or collapsed).  While the leader is still
            # ramping up, a fresh target is sent once per pedal-delay window;
            # re-sending a conflicting absolute target every tick would be
            # pointless while the previous one is in the member's pipeline.
            ramping = self.phase is Phase.ACCELERATION and (
                abs(self.leader_speed - self.resume_speed) > self.join_speed_tol_mps
            )
            last = self._taper_tick.get(member_id)
            if (
                ramping
                and last is not None
                and self.taper_interval_ticks > 1
                and tick - last < self.taper_interval_ticks
            ):
                return ActionCommand(member_id, Action.MAINTAIN, tick)
            self._taper_tick[member_id] = tick
            error = report.ivd_m - self.desired_ivd_m
            catchup = self.join_gap_gain * error
            catchup = max(-self.join_catchup_mps, min(self.join_catchup_mps, catchup))
            if self.catchup_step_mps > 0.0 and abs(catchup) > self.catchup_fine_mps:
                step = self.catchup_step_mps
                catchup = step * round(catchup / step)
            return ActionCommand(
                member_id, Action.RESUME, tick,
                value=max(self.leader_speed + catchup, 0.0),
            )

        lo, hi = self.band
        gap = report.ivd_m
        if gap > hi:
            return ActionCommand(member_id, Action.ACCELERATE, tick, value=self.margin_mps)
        if gap < lo:
            return ActionCommand(member_id, Action.DECELERATE, tick, value=self.margin_mps)
        return ActionCommand(member_id, Action.MAINTAIN, tick)
