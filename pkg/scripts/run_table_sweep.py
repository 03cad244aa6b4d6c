#!/usr/bin/env python3
"""Run the standard protocol x rate sweep and print the stability table.

Equivalent to `platoonsim sweep --jobs N` but prints the aggregated cells to
stdout in a readable table alongside the CSV, for eyeballing the protocol and
rate orderings.
"""

import argparse
import dataclasses
from multiprocessing import Pool
from pathlib import Path

from platoonsim import ScenarioConfig, run
from platoonsim.channel import builtin_curve
from platoonsim.metrics import aggregate, emit_summary_csv


def _worker(item):
    config, curve = item
    _, summary = run(config, curve=curve)
    return summary


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rates", default="80,40,10")
    ap.add_argument("--protocols", default="dsrc,lte")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--jobs", type=int, default=4)
    ap.add_argument("--out", default="out/sweep_summary.csv")
    args = ap.parse_args()

    rates = [float(r) for r in args.rates.split(",")]
    protocols = args.protocols.split(",")
    base = ScenarioConfig()
    jobs = [
        (
            dataclasses.replace(base, protocol=p, message_rate_hz=r, seed=s),
            builtin_curve(p),
        )
        for p in protocols
        for r in rates
        for s in range(args.seeds)
    ]
    if args.jobs > 1:
        with Pool(args.jobs) as pool:
            summaries = pool.map(_worker, jobs)
    else:
        summaries = [_worker(j) for j in jobs]

    sweep = aggregate(summaries)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_summary_csv(sweep, out)

    print(f"{'protocol':<10} {'rate_hz':>8} {'mean_tts_s':>11} {'stddev_s':>9} {'collisions':>10}")
    for (protocol, rate) in sorted(sweep.cells, key=lambda k: (k[0], -k[1])):
        cell = sweep.cells[(protocol, rate)]
        mean = "n/a" if cell.mean_time_to_stability_s is None else f"{cell.mean_time_to_stability_s:.4f}"
        std = "n/a" if cell.stddev_s is None else f"{cell.stddev_s:.4f}"
        print(f"{protocol:<10} {rate:>8g} {mean:>11} {std:>9} {cell.collision_runs:>10}")
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
