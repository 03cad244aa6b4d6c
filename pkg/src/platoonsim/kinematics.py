"""Longitudinal vehicle dynamics and the pedal-delay buffer."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional

# Tolerance for comparing simulation timestamps (tick/rate arithmetic is
# subject to 1-ulp float noise).
TIME_EPS = 1e-9


class VehicleMode(Enum):
    REGULATED = "regulated"
    EMERGENCY_BRAKING = "emergency_braking"
    HALTED = "halted"


@dataclass(frozen=True)
class VehicleParams:
    """Static truck limits.  Defaults match a 13.6 m tractor-trailer."""

    length_m: float = 13.6
    max_accel: float = 2.5        # m/s^2, positive
    max_decel: float = 10.0       # m/s^2, positive magnitude
    max_speed: float = 27.77      # m/s
    antenna_offset_m: float = 0.5  # from the front bumper
    reaction_time_s: float = 0.3   # command receipt -> pedal actuation

    def __post_init__(self) -> None:
        if self.length_m <= 0:
            raise ValueError("length_m must be positive")
        if self.max_accel <= 0 or self.max_decel <= 0 or self.max_speed <= 0:
            raise ValueError("acceleration limits and max_speed must be positive")
        if not 0 <= self.antenna_offset_m <= self.length_m:
            raise ValueError("antenna_offset_m must lie within the vehicle length")
        if self.reaction_time_s < 0:
            raise ValueError("reaction_time_s must be non-negative")

    @property
    def antenna_pos_offset(self) -> float:
        return self.antenna_offset_m


@dataclass
class VehicleState:
    """Per-tick longitudinal state.  Position is the front-bumper arc length."""

    id: int
    front_pos_m: float
    speed: float
    target_speed: float
    mode: VehicleMode = VehicleMode.REGULATED


def clamp(x: float, lo: float, hi: float) -> float:
    return max(lo, min(hi, x))


def step_vehicle(state: VehicleState, params: VehicleParams, dt: float) -> VehicleState:
    """Advance one tick with semi-implicit Euler.

    Acceleration demand (target - speed)/dt is clamped to the vehicle limits,
    the new speed is clamped to [0, max_speed], and the position moves with
    the updated speed.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    accel = clamp((state.target_speed - state.speed) / dt, -params.max_decel, params.max_accel)
    new_speed = clamp(state.speed + accel * dt, 0.0, params.max_speed)
    new_pos = state.front_pos_m + new_speed * dt
    mode = state.mode
    if new_speed == 0.0 and state.target_speed == 0.0:
        mode = VehicleMode.HALTED
    elif mode is VehicleMode.HALTED and new_speed > 0.0:
        mode = VehicleMode.REGULATED
    return replace(state, front_pos_m=new_pos, speed=new_speed, mode=mode)


@dataclass
class DelayBuffer:
    """Holds received commands until the pedal delay elapses.

    A command received at time t becomes effective at t + reaction_time.
    Receipt order is preserved for equal effective times.
    """

    _queue: deque = field(default_factory=deque)
    _seq: int = 0

    def enqueue(self, cmd: Any, receipt_time_s: float, reaction_time_s: float) -> None:
        if reaction_time_s < 0:
            raise ValueError("reaction_time_s must be non-negative")
        self._queue.append((receipt_time_s + reaction_time_s, self._seq, cmd))
        self._seq += 1

    def pop_effective(self, now_s: float) -> Optional[Any]:
        """Return the newest matured command, discarding older matured ones.

        Commands mature in effective-time order (enqueue order for ties), so
        a single pass from the front finds everything with effective time
        <= now.  Returns None when nothing has matured.
        """
        newest = None
        while self._queue and self._queue[0][0] <= now_s + TIME_EPS:
            _, _, newest = self._queue.popleft()
        return newest

    def peek_newest_matured(self, now_s: float) -> Optional[Any]:
        """Newest matured command without removing anything."""
        newest = None
        for eff, _, cmd in self._queue:
            if eff <= now_s + TIME_EPS:
                newest = cmd
            else:
                break
        return newest

    def matured_count(self, now_s: float) -> int:
        return sum(1 for eff, _, _ in self._queue if eff <= now_s + TIME_EPS)

    def __len__(self) -> int:
        return len(self._queue)
