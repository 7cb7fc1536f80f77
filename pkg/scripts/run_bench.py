#!/usr/bin/env python3
"""Run the strategy comparison benchmark and print CSV + summary.

    python scripts/run_bench.py [scenario.json] [--speedup] [--transport process]

Without a scenario file the built-in default (16x16, 4 workers, pop 32,
50 generations, chunk 1) is used. --speedup adds a 1-worker baseline run per
strategy to fill the speedup column.
"""

import argparse
import dataclasses
import sys

sys.path.insert(0, "src")

from agrimon.bench import BenchScenario, bench_strategies, default_scenario


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenario", nargs="?", help="scenario JSON file")
    ap.add_argument("--speedup", action="store_true",
                    help="also run 1-worker baselines")
    ap.add_argument("--transport", choices=("thread", "process"))
    ap.add_argument("--workers", type=int)
    args = ap.parse_args(argv)

    scenario = (BenchScenario.from_json_file(args.scenario) if args.scenario
                else default_scenario())
    overrides = {}
    if args.speedup:
        overrides["speedup_baseline"] = True
    if args.transport:
        overrides["transport"] = args.transport
    if args.workers:
        overrides["workers"] = args.workers
    scenario = dataclasses.replace(scenario, **overrides)

    report = bench_strategies(scenario)
    print(report.to_csv())
    print(report.summary(), file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
