#!/usr/bin/env python3
"""Brute-force sweep over forced-loss window widths at the braking onset.

Forces every downlink command to the last platoon member to be lost for a
window of W consecutive ticks starting at the emergency-braking onset, and
reports the smallest W that produces a collision.  The acceptance suite
freezes that minimal width as a constant.
"""

import argparse
import math
import sys

from platoonsim import ScenarioConfig, run
from platoonsim.channel import DOWNLINK, LossEntry, LossSchedule


def collision_for_width(config: ScenarioConfig, member_id: int, width: int) -> bool:
    rate = config.message_rate_hz
    onset = math.ceil(config.braking_trigger_s * rate - 1e-9)
    schedule = LossSchedule.from_entries(
        [LossEntry(DOWNLINK, member_id, onset, onset + width - 1)]
    )
    _, summary = run(config, loss_schedule=schedule)
    return summary.collision is not None


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rate", type=float, default=80.0)
    ap.add_argument("--protocol", default="dsrc")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-width", type=int, default=400)
    args = ap.parse_args()

    config = ScenarioConfig(
        message_rate_hz=args.rate, protocol=args.protocol, seed=args.seed
    )
    last_member = config.truck_count - 1

    minimal = None
    for width in range(1, args.max_width + 1):
        hit = collision_for_width(config, last_member, width)
        print(f"width={width:4d}  collision={hit}")
        if hit:
            minimal = width
            break
    if minimal is None:
        print(f"no collision up to width {args.max_width}", file=sys.stderr)
        return 1
    assert not collision_for_width(config, last_member, minimal - 1)
    print(f"minimal collision width at {args.rate:g} Hz ({args.protocol}): K={minimal}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
