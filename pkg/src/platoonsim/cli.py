"""Command-line entry point: single runs, protocol/rate sweeps, plotting.

Exit codes: 0 success, 1 configuration or I/O error, 2 collision recorded.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import multiprocessing
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .channel import (
    CurveError,
    LossEntry,
    LossSchedule,
    PdrCurve,
    builtin_curve,
    load_curve_file,
    lossless_curve,
)
from .kinematics import VehicleParams
from .metrics import (
    TraceFormatError,
    aggregate,
    emit_plot,
    emit_summary_csv,
    emit_trace_csv,
    load_trace_csv,
    PLOT_KINDS,
)
from .scenario import ConfigError, ScenarioConfig, SpawnSpec, run as run_scenario

_CONFIG_KEYS = {f.name for f in dataclasses.fields(ScenarioConfig)}
_FILE_ONLY_KEYS = {"curves", "out_dir"}


def load_config_file(path) -> Tuple[ScenarioConfig, Dict[str, str], Optional[str]]:
    """Read a JSON config; returns (config, curve paths per protocol, out dir)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error in {path} at line {exc.lineno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise ConfigError("config file must contain a JSON object")
    unknown = set(doc) - _CONFIG_KEYS - _FILE_ONLY_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    curves = doc.pop("curves", {})
    out_dir = doc.pop("out_dir", None)
    if not isinstance(curves, dict):
        raise ConfigError("'curves' must map protocol names to file paths")
    if "spawn_plan" in doc and doc["spawn_plan"] is not None:
        doc["spawn_plan"] = tuple(SpawnSpec(**s) for s in doc["spawn_plan"])
    if "vehicle" in doc:
        doc["vehicle"] = VehicleParams(**doc["vehicle"])
    try:
        config = dataclasses.replace(ScenarioConfig(), **doc)
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}")
    return config, {str(k): str(v) for k, v in curves.items()}, out_dir


def resolve_curve(protocol: str, curve_paths: Dict[str, str], lossless: bool) -> PdrCurve:
    if lossless:
        return lossless_curve()
    if protocol in curve_paths:
        path = curve_paths[protocol]
        if not os.path.exists(path):
            raise ConfigError(f"curve file for {protocol!r} not found: {path}")
        return load_curve_file(path)
    return builtin_curve(protocol)


def parse_force_loss(spec: str) -> LossEntry:
    """Parse 'member=4,dir=down,ticks=8000..8040'."""
    fields = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ConfigError(f"bad --force-loss component {part!r}")
        key, value = part.split("=", 1)
        fields[key.strip()] = value.strip()
    extra = set(fields) - {"member", "dir", "ticks"}
    if extra:
        raise ConfigError(f"unknown --force-loss keys: {sorted(extra)}")
    try:
        member = int(fields["member"])
        direction = fields["dir"]
        lo_s, hi_s = fields["ticks"].split("..")
        lo, hi = int(lo_s), int(hi_s)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad --force-loss spec {spec!r}: {exc}")
    if direction not in ("up", "down"):
        raise ConfigError(f"--force-loss dir must be 'up' or 'down', got {direction!r}")
    if lo > hi:
        raise ConfigError(f"--force-loss tick range {lo}..{hi} is empty")
    return LossEntry(direction=direction, vehicle_id=member, tick_lo=lo, tick_hi=hi)


def _apply_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "rate", None) is not None:
        updates["message_rate_hz"] = args.rate
    if getattr(args, "protocol", None) is not None:
        updates["protocol"] = args.protocol
    if getattr(args, "ivd", None) is not None:
        updates["desired_ivd_m"] = args.ivd
    return dataclasses.replace(config, **updates) if updates else config


def _rate_tag(rate: float) -> str:
    return str(int(rate)) if float(rate).is_integer() else str(rate)


def cmd_run(args) -> int:
    config = ScenarioConfig()
    curve_paths: Dict[str, str] = {}
    out_dir = args.out
    if args.config:
        config, curve_paths, file_out = load_config_file(args.config)
        out_dir = args.out or file_out
    config = _apply_overrides(config, args)
    out_dir = Path(out_dir or "out")
    curve = resolve_curve(config.protocol, curve_paths, args.lossless)
    schedule = None
    if args.force_loss:
        schedule = LossSchedule.from_entries(parse_force_loss(s) for s in args.force_loss)

    trace, summary = run_scenario(config, curve=curve, loss_schedule=schedule)

    out_dir.mkdir(parents=True, exist_ok=True)
    tag = f"{config.protocol}_{_rate_tag(config.message_rate_hz)}hz_seed{config.seed}"
    trace_path = out_dir / f"trace_{tag}.csv"
    summary_path = out_dir / f"summary_{tag}.json"
    emit_trace_csv(trace, trace_path)
    summary_path.write_text(summary.to_json(), encoding="utf-8")
    print(f"wrote {trace_path} and {summary_path}")

    if summary.collision is not None:
        c = summary.collision
        print(
            f"collision at tick {c.tick}: vehicle {c.follower_id} into {c.leader_id} "
            f"(closing {c.closing_speed:.2f} m/s)",
            file=sys.stderr,
        )
        return 2
    if summary.time_to_stability_s is not None:
        print(f"time to stability: {summary.time_to_stability_s:.3f} s")
    elif summary.stability_applicable:
        print("stability not reached", file=sys.stderr)
    return 0


def _sweep_worker(item) -> "RunSummary":
    config, curve = item
    _, summary = run_scenario(config, curve=curve)
    return summary


def cmd_sweep(args) -> int:
    config = ScenarioConfig()
    curve_paths: Dict[str, str] = {}
    out_dir = args.out
    if args.config:
        config, curve_paths, file_out = load_config_file(args.config)
        out_dir = args.out or file_out
    config = _apply_overrides(config, args)
    out_dir = Path(out_dir or "out")
    if args.seeds < 1:
        raise ConfigError("--seeds must be at least 1")

    rates = [float(r) for r in args.rates.split(",")]
    protocols = args.protocols.split(",")
    jobs = []
    for protocol in protocols:
        curve = resolve_curve(protocol, curve_paths, args.lossless)
        for rate in rates:
            for seed in range(args.seeds):
                cell_config = dataclasses.replace(
                    config, protocol=protocol, message_rate_hz=rate, seed=seed
                )
                jobs.append((cell_config, curve))

    if args.jobs > 1:
        with multiprocessing.Pool(args.jobs) as pool:
            summaries = pool.map(_sweep_worker, jobs)
    else:
        summaries = [_sweep_worker(j) for j in jobs]

    sweep = aggregate(summaries)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "sweep_summary.csv"
    emit_summary_csv(sweep, out_path)
    print(f"wrote {out_path}")
    return 0


def cmd_plot(args) -> int:
    trace = load_trace_csv(args.trace)
    desired = args.ivd if args.ivd is not None else 5.0
    emit_plot(trace, kind=args.kind, destination=args.out, desired_ivd=desired)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platoonsim",
        description="Deterministic platoon simulator over lossy V2V links.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a single seeded scenario")
    p_run.add_argument("--config", help="JSON scenario config file")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--rate", type=float, help="message rate in Hz")
    p_run.add_argument("--protocol", help="curve selection, e.g. dsrc or lte")
    p_run.add_argument("--ivd", type=float, help="desired inter-vehicle distance (m)")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--lossless", action="store_true", help="force pdr=1 everywhere")
    p_run.add_argument(
        "--force-loss",
        action="append",
        metavar="SPEC",
        help="forced loss window, e.g. member=4,dir=down,ticks=8000..8040",
    )
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid of (protocol, rate, seed) runs")
    p_sweep.add_argument("--config", help="JSON scenario config file")
    p_sweep.add_argument("--rates", default="80,40,10", help="comma-separated rates in Hz")
    p_sweep.add_argument("--protocols", default="dsrc,lte", help="comma-separated protocols")
    p_sweep.add_argument("--seeds", type=int, default=20, help="seeds per cell")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_sweep.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    p_sweep.add_argument("--rate", type=float, help=argparse.SUPPRESS)
    p_sweep.add_argument("--protocol", help=argparse.SUPPRESS)
    p_sweep.add_argument("--ivd", type=float, help="desired inter-vehicle distance (m)")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.add_argument("--lossless", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_plot = sub.add_parser("plot", help="render a trace CSV as an SVG time series")
    p_plot.add_argument("trace", help="trace CSV path")
    p_plot.add_argument(
        "--kind", required=True, help=f"one of {', '.join(PLOT_KINDS)}"
    )
    p_plot.add_argument("--ivd", type=float, help="band centre for ivd plots")
    p_plot.add_argument("--out", required=True, help="output SVG path")
    p_plot.set_defaults(func=cmd_plot)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CurveError, TraceFormatError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
