#!/usr/bin/env python3
"""Full parameter-recovery experiment: synthesize, assimilate, score.

    python scripts/recovery_experiment.py [--rows 8 --cols 8 --noise 0.0]

Prints per-gene error statistics and the fraction of pixels recovered within
the standard tolerances (sow_day +/-2 days, wmax +/-10%, growth_rate +/-20%).
Use --noise to study degradation under observation noise.
"""

import argparse
import sys
import time

sys.path.insert(0, "src")

from agrimon.distribute import Strategy, run_job
from agrimon.ga import GaConfig
from agrimon.model import GenomeBounds
from agrimon.raster import Region, synthesize_truth
from agrimon.synth import SYNTH_TEMPLATE, make_truth_field, synthetic_weather


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=8)
    ap.add_argument("--cols", type=int, default=8)
    ap.add_argument("--days", type=int, default=120)
    ap.add_argument("--revisit", type=int, default=8)
    ap.add_argument("--noise", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ga-seed", type=int, default=12345)
    ap.add_argument("--pop", type=int, default=48)
    ap.add_argument("--gens", type=int, default=120)
    ap.add_argument("--workers", type=int, default=2)
    ap.add_argument("--transport", default="thread")
    args = ap.parse_args(argv)

    weather = synthetic_weather(args.days, args.seed)
    field = make_truth_field(args.rows, args.cols, args.seed, args.days)
    grid = synthesize_truth(field, weather, args.revisit, args.noise, args.seed)
    region = Region(0, 0, args.rows - 1, args.cols - 1)
    config = GaConfig(pop_size=args.pop, generations=args.gens, seed=args.ga_seed)
    bounds = GenomeBounds.default(args.days)

    started = time.perf_counter()
    param_map, metrics = run_job(grid, region, weather, config, bounds,
                                 SYNTH_TEMPLATE, Strategy("pixel"),
                                 args.workers, transport=args.transport)
    elapsed = time.perf_counter() - started

    errors = {"sow_day": [], "wmax_mm": [], "growth_rate": []}
    recovered = 0
    for (r, c), res in sorted(param_map.results.items()):
        truth = field.at(r, c)
        g = res.genome
        errors["sow_day"].append(abs(g.sow_day - truth.sow_day))
        errors["wmax_mm"].append(abs(g.wmax_mm - truth.wmax_mm) / truth.wmax_mm)
        errors["growth_rate"].append(
            abs(g.growth_rate - truth.growth_rate) / truth.growth_rate)
        recovered += (errors["sow_day"][-1] <= 2
                      and errors["wmax_mm"][-1] <= 0.10
                      and errors["growth_rate"][-1] <= 0.20)

    n = len(param_map.results)
    print(f"{args.rows}x{args.cols} pixels, noise {args.noise}, "
          f"{elapsed:.0f}s wall, {metrics.messages} messages")
    print(f"sow_day   mean abs err {sum(errors['sow_day']) / n:.2f} days, "
          f"max {max(errors['sow_day'])}")
    print(f"wmax_mm   mean rel err {sum(errors['wmax_mm']) / n:.1%}, "
          f"max {max(errors['wmax_mm']):.1%}")
    print(f"growth    mean rel err {sum(errors['growth_rate']) / n:.1%}, "
          f"max {max(errors['growth_rate']):.1%}")
    print(f"recovered within tolerance: {recovered}/{n} ({recovered / n:.1%})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
