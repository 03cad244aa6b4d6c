"""Distance-dependent lossy message delivery.

Both link directions are modelled as i.i.d. Bernoulli draws against a
piecewise-constant packet-delivery-ratio curve over antenna distance.
Forced-loss schedules override the stochastic outcome for fault injection
without perturbing the RNG stream.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional, Sequence, Tuple

UPLINK = "up"
DOWNLINK = "down"

_BUILTIN_CURVES = {"dsrc": "dsrc.json", "lte": "lte.json"}


class CurveError(ValueError):
    """Raised for malformed or invalid PDR curve documents."""


@dataclass(frozen=True)
class PdrCurve:
    """Piecewise-constant delivery probability over distance.

    ``bins`` is an ordered sequence of (upper_distance_m, pdr); a lookup at
    distance d returns the pdr of the first bin whose upper bound exceeds d,
    falling back to ``tail_pdr`` beyond the last bin.
    """

    protocol_name: str
    bins: Tuple[Tuple[float, float], ...]
    tail_pdr: float

    def __post_init__(self) -> None:
        prev = 0.0
        for i, (upper, pdr) in enumerate(self.bins):
            if i > 0 and upper <= prev:
                raise CurveError(
                    f"bin upper bounds must be strictly increasing (bin {i}: {upper} <= {prev})"
                )
            if upper <= 0:
                raise CurveError(f"bin {i}: upper bound must be positive, got {upper}")
            if not 0.0 <= pdr <= 1.0:
                raise CurveError(f"bin {i}: pdr {pdr} outside [0, 1]")
            prev = upper
        if not 0.0 <= self.tail_pdr <= 1.0:
            raise CurveError(f"tail_pdr {self.tail_pdr} outside [0, 1]")

    def pdr_at(self, distance_m: float) -> float:
        if distance_m < 0:
            raise ValueError("distance_m must be non-negative")
        for upper, pdr in self.bins:
            if upper > distance_m:
                return pdr
        return self.tail_pdr


def pdr_at_distance(curve: PdrCurve, distance_m: float) -> float:
    return curve.pdr_at(distance_m)


def lossless_curve(name: str = "lossless") -> PdrCurve:
    return PdrCurve(protocol_name=name, bins=(), tail_pdr=1.0)


def load_curve(source: str) -> PdrCurve:
    """Parse and validate a JSON curve document (see data/dsrc.json)."""
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise CurveError(f"curve parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise CurveError("curve document must be a JSON object")
    unknown = set(doc) - {"protocol", "bins", "tail_pdr"}
    if unknown:
        raise CurveError(f"unknown curve fields: {sorted(unknown)}")
    try:
        protocol = doc["protocol"]
        raw_bins = doc["bins"]
        tail = float(doc["tail_pdr"])
    except KeyError as exc:
        raise CurveError(f"missing curve field {exc}")
    bins = []
    for i, entry in enumerate(raw_bins):
        try:
            bins.append((float(entry["max_distance_m"]), float(entry["pdr"])))
        except (KeyError, TypeError) as exc:
            raise CurveError(f"bin {i}: expected max_distance_m and pdr fields ({exc})")
    return PdrCurve(protocol_name=str(protocol), bins=tuple(bins), tail_pdr=tail)


def load_curve_file(path) -> PdrCurve:
    with open(path, "r", encoding="utf-8") as fh:
        return load_curve(fh.read())


def builtin_curve(protocol: str) -> PdrCurve:
    """Load one of the shipped default curves ('dsrc' or 'lte')."""
    try:
        filename = _BUILTIN_CURVES[protocol]
    except KeyError:
        raise CurveError(f"unknown protocol {protocol!r}; expected one of {sorted(_BUILTIN_CURVES)}")
    text = resources.files("platoonsim.data").joinpath(filename).read_text(encoding="utf-8")
    return load_curve(text)


@dataclass
class ChannelRng:
    """Single-consumer seeded stream; one draw per transmit attempt."""

    seed: int
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._rng = random.Random(self.seed)

    def draw(self) -> float:
        return self._rng.random()


@dataclass(frozen=True)
class LossEntry:
    direction: str           # UPLINK or DOWNLINK
    vehicle_id: int
    tick_lo: int             # inclusive
    tick_hi: int             # inclusive

    def matches(self, tick: int, direction: str, vehicle_id: int) -> bool:
        return (
            self.direction == direction
            and self.vehicle_id == vehicle_id
            and self.tick_lo <= tick <= self.tick_hi
        )


@dataclass(frozen=True)
class LossSchedule:
    entries: Tuple[LossEntry, ...] = ()

    @classmethod
    def from_entries(cls, entries: Iterable[LossEntry]) -> "LossSchedule":
        return cls(entries=tuple(entries))

    def forces_loss(self, tick: int, direction: str, vehicle_id: int) -> bool:
        return any(e.matches(tick, direction, vehicle_id) for e in self.entries)


EMPTY_SCHEDULE = LossSchedule()


def transmit(
    curve: PdrCurve,
    rng: ChannelRng,
    schedule: Optional[LossSchedule],
    distance_m: float,
    tick: int,
    direction: str,
    vehicle_id: int,
) -> bool:
    """Sample one message delivery.

    Exactly one RNG draw is consumed per call, even when a forced-loss entry
    decides the outcome, so seeded streams stay aligned between a run and its
    fault-injection variants.
    """
    u = rng.draw()
    if schedule is not None and schedule.forces_loss(tick, direction, vehicle_id):
        return False
    return u < curve.pdr_at(distance_m)
