"""Trace records, run summaries, multi-seed aggregation, CSV and SVG output.

All emitters are byte-deterministic: floats are rounded to six decimals
when a record is built, so a CSV round-trip reproduces the in-memory trace
field-for-field.
"""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

TRACE_COLUMNS = [
    "tick",
    "time_s",
    "vehicle_id",
    "front_pos_m",
    "speed_mps",
    "ivd_m",
    "last_command",
    "command_age_ticks",
    "uplink_delivered",
    "downlink_delivered",
    "phase",
]

SUMMARY_COLUMNS = [
    "protocol",
    "message_rate_hz",
    "seeds",
    "collision_runs",
    "mean_time_to_stability_s",
    "stddev_s",
]


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    time_s: float
    vehicle_id: int
    front_pos_m: float
    speed_mps: float
    ivd_m: Optional[float]          # None for the lead vehicle
    last_command: str
    command_age_ticks: int
    uplink_delivered: bool
    downlink_delivered: bool
    phase: str


@dataclass(frozen=True)
class RunSummary:
    config: dict
    seed: int
    time_to_stability_s: Optional[float]
    collision: Optional[object]     # CollisionRecord
    stability_applicable: bool
    messages_sent_up: int
    messages_sent_down: int
    messages_lost_up: int
    messages_lost_down: int
    per_member_losses: Dict[int, Tuple[int, int]]  # id -> (up, down)

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "seed": self.seed,
            "time_to_stability_s": _round6(self.time_to_stability_s),
            "collision": None,
            "stability_applicable": self.stability_applicable,
            "messages_sent_up": self.messages_sent_up,
            "messages_sent_down": self.messages_sent_down,
            "messages_lost_up": self.messages_lost_up,
            "messages_lost_down": self.messages_lost_down,
            "per_member_losses": {
                str(k): {"up": v[0], "down": v[1]}
                for k, v in sorted(self.per_member_losses.items())
            },
        }
        if self.collision is not None:
            doc["collision"] = {
                "tick": self.collision.tick,
                "follower_id": self.collision.follower_id,
                "leader_id": self.collision.leader_id,
                "closing_speed": _round6(self.collision.closing_speed),
            }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class CellStats:
    seeds: int
    collision_runs: int
    mean_time_to_stability_s: Optional[float]  # None when no usable run
    stddev_s: Optional[float]


@dataclass(frozen=True)
class SweepSummary:
    cells: Dict[Tuple[str, float], CellStats]


def _round6(x: Optional[float]) -> Optional[float]:
    return None if x is None else round(x, 6)


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.6f}"


def summarize(trace: Sequence[TraceRecord], config) -> RunSummary:
    """Aggregate one completed trace into its run summary."""
    from .scenario import CollisionRecord, detect_stability  # local import: avoids a cycle

    vehicle_ids = sorted({r.vehicle_id for r in trace})
    by_tick: Dict[int, List[TraceRecord]] = {}
    for rec in trace:
        by_tick.setdefault(rec.tick, []).append(rec)
    ticks = sorted(by_tick)
    for i, tick in enumerate(ticks):
        if tick != i or len(by_tick[tick]) != len(vehicle_ids):
            raise TraceFormatError(f"truncated or inconsistent trace at tick {tick}")

    collision = None
    for tick in ticks:
        hit = [r for r in by_tick[tick] if r.ivd_m is not None and r.ivd_m <= 0]
        if hit:
            follower = min(hit, key=lambda r: r.vehicle_id)
            speeds = {r.vehicle_id: r.speed_mps for r in by_tick[tick]}
            collision = CollisionRecord(
                tick=tick,
                follower_id=follower.vehicle_id,
                leader_id=follower.vehicle_id - 1,
                closing_speed=round(
                    speeds[follower.vehicle_id] - speeds[follower.vehicle_id - 1], 6
                ),
            )
            break

    applicable = len(vehicle_ids) > 1
    tts = None
    if collision is None and applicable:
        tts = detect_stability(
            trace,
            desired_ivd=config.desired_ivd_m,
            tolerance_frac=config.tolerance_frac,
            dwell_s=config.stability_dwell_s,
            acceleration_start_s=config.acceleration_trigger_s,
        )

    sent_up = sent_down = lost_up = lost_down = 0
    per_member: Dict[int, List[int]] = {}
    leader_id = min(vehicle_ids) if vehicle_ids else 0
    for rec in trace:
        if rec.vehicle_id == leader_id:
            continue
        sent_up += 1
        sent_down += 1
        losses = per_member.setdefault(rec.vehicle_id, [0, 0])
        if not rec.uplink_delivered:
            lost_up += 1
            losses[0] += 1
        if not rec.downlink_delivered:
            lost_down += 1
            losses[1] += 1

    return RunSummary(
        config=config.to_dict(),
        seed=config.seed,
        time_to_stability_s=_round6(tts),
        collision=collision,
        stability_applicable=applicable,
        messages_sent_up=sent_up,
        messages_sent_down=sent_down,
        messages_lost_up=lost_up,
        messages_lost_down=lost_down,
        per_member_losses={k: (v[0], v[1]) for k, v in sorted(per_member.items())},
    )


def aggregate(summaries: Sequence[RunSummary]) -> SweepSummary:
    """Per (protocol, rate) mean/stddev over collision-free stabilized runs."""
    groups: Dict[Tuple[str, float], List[RunSummary]] = {}
    for s in summaries:
        key = (s.config["protocol"], float(s.config["message_rate_hz"]))
        groups.setdefault(key, []).append(s)
    cells = {}
    for key, runs in groups.items():
        collisions = sum(1 for r in runs if r.collision is not None)
        times = [
            r.time_to_stability_s
            for r in runs
            if r.collision is None and r.time_to_stability_s is not None
        ]
        if times:
            mean = round(sum(times) / len(times), 6)
            stddev = round(statistics.pstdev(times), 6)
        else:
            mean = stddev = None
        cells[key] = CellStats(
            seeds=len(runs),
            collision_runs=collisions,
            mean_time_to_stability_s=mean,
            stddev_s=stddev,
        )
    return SweepSummary(cells=cells)


# -- CSV ---------------------------------------------------------------------

def trace_to_csv(trace: Sequence[TraceRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in trace:
        writer.writerow(
            [
                r.tick,
                _fmt(r.time_s),
                r.vehicle_id,
                _fmt(r.front_pos_m),
                _fmt(r.speed_mps),
                _fmt(r.ivd_m),
                r.last_command,
                r.command_age_ticks,
                "true" if r.uplink_delivered else "false",
                "true" if r.downlink_delivered else "false",
                r.phase,
            ]
        )
    return out.getvalue()


def emit_trace_csv(trace: Sequence[TraceRecord], destination) -> None:
    try:
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            fh.write(trace_to_csv(trace))
    except OSError as exc:
        raise OSError(f"failed writing trace CSV to {destination}: {exc}") from exc


def parse_trace_csv(text: str) -> List[TraceRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TraceFormatError("empty trace file (line 1)")
    if header != TRACE_COLUMNS:
        raise TraceFormatError(f"unexpected trace header (line 1): {header}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(TRACE_COLUMNS):
            raise TraceFormatError(f"wrong field count at line {lineno}")
        try:
            records.append(
                TraceRecord(
                    tick=int(row[0]),
                    time_s=float(row[1]),
                    vehicle_id=int(row[2]),
                    front_pos_m=float(row[3]),
                    speed_mps=float(row[4]),
                    ivd_m=float(row[5]) if row[5] != "" else None,
                    last_command=row[6],
                    command_age_ticks=int(row[7]),
                    uplink_delivered=row[8] == "true",
                    downlink_delivered=row[9] == "true",
                    phase=row[10],
                )
            )
        except ValueError as exc:
            raise TraceFormatError(f"bad field at line {lineno}: {exc}")
    return records


def load_trace_csv(path) -> List[TraceRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace_csv(fh.read())


def sweep_to_csv(sweep: SweepSummary) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    # Table layout: protocols alphabetical, rates descending.
    for (protocol, rate) in sorted(sweep.cells, key=lambda k: (k[0], -k[1])):
        cell = sweep.cells[(protocol, rate)]
        writer.writerow(
            [
                protocol,
                _fmt(rate),
                cell.seeds,
                cell.collision_runs,
                "unavailable" if cell.mean_time_to_stability_s is None
                else _fmt(cell.mean_time_to_stability_s),
                "" if cell.stddev_s is None else _fmt(cell.stddev_s),
            ]
        )
    return out.getvalue()


def emit_summary_csv(sweep: SweepSummary, destination) -> None:
    try:
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            fh.write(sweep_to_csv(sweep))
    except OSError as exc:
        raise OSError(f"failed writing summary CSV to {destination}: {exc}") from exc


# -- Plots -------------------------------------------------------------------

PLOT_KINDS = ("speed", "ivd")


def emit_plot(
    trace: Sequence[TraceRecord],
    kind: str,
    destination,
    desired_ivd: float = 5.0,
    tolerance_frac: float = 0.10,
) -> None:
    """Write a per-vehicle time-series plot (SVG)."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    if not trace:
        raise ValueError("cannot plot an empty trace")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "platoonsim"

    series: Dict[int, Tuple[List[float], List[float]]] = {}
    for rec in trace:
        value = rec.speed_mps if kind == "speed" else rec.ivd_m
        if value is None:
            continue
        xs, ys = series.setdefault(rec.vehicle_id, ([], []))
        xs.append(rec.time_s)
        ys.append(value)

    fig, ax = plt.subplots(figsize=(10, 5))
    if kind == "ivd":
        lo = desired_ivd * (1 - tolerance_frac)
        hi = desired_ivd * (1 + tolerance_frac)
        ax.axhspan(lo, hi, color="0.85", label=f"tolerance band [{lo:.2f}, {hi:.2f}] m")
    for vid in sorted(series):
        xs, ys = series[vid]
        label = "leader" if vid == 0 else f"member {vid}"
        ax.plot(xs, ys, linewidth=0.9, label=label)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("speed (m/s)" if kind == "speed" else "inter-vehicle distance (m)")
    ax.legend(loc="best", fontsize="small")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    try:
        fig.savefig(destination, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OSError(f"failed writing plot to {destination}: {exc}") from exc
    finally:
        plt.close(fig)
