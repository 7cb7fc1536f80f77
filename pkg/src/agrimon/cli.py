"""Operator command line.

Subcommands:
    gen-synthetic   write a synthetic observation raster + truth + weather CSV
    assimilate      run a regional assimilation job from files
    bench           compare distribution strategies, emit CSV
    score           compare a recovered parameter map against a truth field
    ingest          parse and store feed files (single file or inbox directory)
    serve           run the job portal

Exit codes: 0 success, 2 usage or input validation, 1 runtime failure.
"""

import argparse
import json
import logging
import os
import sys

from agrimon import __version__
from agrimon.bench import BenchScenario, bench_strategies, default_scenario
from agrimon.distribute import JobError, Strategy, StrategyKind, run_job
from agrimon.ga import GaConfig
from agrimon.ingest import (
    DataStore, parse_any, parse_weather_csv, process_inbox,
)
from agrimon.model import GenomeBounds, ValidationError, WeatherSeries
from agrimon.raster import (
    ParamField, Region, read_raster_file, synthesize_truth, write_raster_file,
)
from agrimon.synth import (
    DEFAULT_START_DATE, DEFAULT_STATION, SYNTH_TEMPLATE, make_truth_field,
    synthetic_weather, weather_to_csv_text,
)

logger = logging.getLogger(__name__)

TOL_DEFAULTS = {"sow_day": 2.0, "wmax_mm": 0.10, "growth_rate": 0.20}


def _parse_region(text: str) -> Region:
    parts = text.split(",")
    if len(parts) != 4:
        raise ValidationError(f"region must be row0,col0,row1,col1 (got {text!r})")
    return Region(*(int(p) for p in parts))


def _weather_from_csv(path) -> WeatherSeries:
    with open(path, "r", encoding="utf-8") as fh:
        observations, report = parse_weather_csv(fh.read(), source=os.path.basename(path))
    if report.rejected:
        for locator, reason in report.reasons:
            logger.warning("weather row rejected at %s: %s", locator, reason)
    days = {}
    for obs in observations:
        days.setdefault(obs.timestamp[:10], {})[obs.variable] = obs.value
    from agrimon.model import WeatherRecord
    records = []
    for i, day in enumerate(sorted(days)):
        vals = days[day]
        if "rain" not in vals or "et0" not in vals:
            raise ValidationError(f"day {day} lacks rain or et0")
        records.append(WeatherRecord(i, vals["rain"], vals["et0"],
                                     vals.get("tmean", 20.0)))
    return WeatherSeries(tuple(records))


def cmd_gen_synthetic(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    weather = synthetic_weather(args.days, args.seed)
    vary = tuple(v.strip() for v in args.vary.split(",") if v.strip())
    field = make_truth_field(args.rows, args.cols, args.seed, args.days, vary=vary)
    grid = synthesize_truth(field, weather, args.revisit, args.noise, args.seed)

    raster_path = os.path.join(args.out, "raster.agr1")
    write_raster_file(raster_path, grid)
    truth = field.to_json_dict()
    truth["meta"] = {"days": args.days, "revisit": args.revisit,
                     "noise": args.noise, "seed": args.seed,
                     "station": args.station, "vary": list(vary),
                     "start_date": DEFAULT_START_DATE.isoformat(),
                     "template": SYNTH_TEMPLATE.as_dict()}
    with open(os.path.join(args.out, "truth.json"), "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=1)
    with open(os.path.join(args.out, "weather.csv"), "w", encoding="utf-8") as fh:
        fh.write(weather_to_csv_text(weather, args.station))
    print(f"wrote {raster_path}: {grid.rows}x{grid.cols} pixels, "
          f"{grid.bands} bands, plus truth.json and weather.csv")
    return 0


def cmd_assimilate(args) -> int:
    grid = read_raster_file(args.raster)
    weather = _weather_from_csv(args.weather)
    region = (_parse_region(args.region) if args.region
              else Region(0, 0, grid.rows - 1, grid.cols - 1))
    region.validate_within(grid.rows, grid.cols)
    strategy = Strategy(args.strategy, chunk=args.chunk, groups=args.groups)
    free = tuple(v.strip() for v in args.free_genes.split(",") if v.strip())
    config = GaConfig(pop_size=args.pop, generations=args.gens, seed=args.seed,
                      early_stop_rmse=args.early_stop, free_genes=free)
    bounds = GenomeBounds.default(weather.season_len)

    param_map, metrics = run_job(grid, region, weather, config, bounds,
                                 SYNTH_TEMPLATE, strategy, args.workers,
                                 transport=args.transport)
    os.makedirs(args.out, exist_ok=True)
    map_path = os.path.join(args.out, "parammap.json")
    with open(map_path, "w", encoding="utf-8") as fh:
        json.dump(param_map.to_json_dict(), fh)
    metrics_path = os.path.join(args.out, "metrics.csv")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write("strategy,workers,pixels,generations,messages,bytes,wall_ms,speedup\n")
        fh.write(f"{metrics.strategy},{metrics.workers},{metrics.pixels},"
                 f"{metrics.generations},{metrics.messages},{metrics.bytes},"
                 f"{metrics.wall_ms:.1f},\n")
    rmses = [r.rmse for r in param_map.results.values()]
    print(f"assimilated {len(rmses)} pixels with {metrics.strategy}/"
          f"{metrics.workers}w: mean rmse {sum(rmses) / len(rmses):.4g}, "
          f"{metrics.messages} messages, {metrics.wall_ms:.0f} ms")
    print(f"wrote {map_path} and {metrics_path}")
    return 0


def cmd_bench(args) -> int:
    if args.scenario:
        scenario = BenchScenario.from_json_file(args.scenario)
    else:
        scenario = default_scenario()
    report = bench_strategies(scenario)
    csv_text = report.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(csv_text)
    print(report.summary(), file=sys.stderr)
    return 0


def cmd_score(args) -> int:
    with open(args.truth, "r", encoding="utf-8") as fh:
        truth_doc = json.load(fh)
    truth = ParamField.from_json_dict(truth_doc)
    with open(args.result, "r", encoding="utf-8") as fh:
        result_doc = json.load(fh)

    if "pixels" in result_doc:
        entries = [((p["row"], p["col"]), p["genome"]) for p in result_doc["pixels"]]
    else:
        # a truth-format file scores against itself
        recovered = ParamField.from_json_dict(result_doc)
        entries = [((r, c), recovered.at(r, c).as_dict())
                   for r in range(recovered.rows) for c in range(recovered.cols)]

    tolerances = {"sow_day": args.tol_sow, "wmax_mm": args.tol_wmax,
                  "growth_rate": args.tol_rate}
    ok = 0
    errors = {name: [] for name in tolerances}
    for (r, c), genes in entries:
        t = truth.at(r, c)
        errors["sow_day"].append(abs(genes["sow_day"] - t.sow_day))
        errors["wmax_mm"].append(abs(genes["wmax_mm"] - t.wmax_mm))
        errors["growth_rate"].append(abs(genes["growth_rate"] - t.growth_rate))
        good = (abs(genes["sow_day"] - t.sow_day) <= args.tol_sow
                and abs(genes["wmax_mm"] - t.wmax_mm) <= args.tol_wmax * t.wmax_mm
                and abs(genes["growth_rate"] - t.growth_rate)
                <= args.tol_rate * t.growth_rate)
        ok += good
    n = len(entries)
    for name, errs in errors.items():
        print(f"{name}: mean abs error {sum(errs) / n:.4g}, max {max(errs):.4g}")
    frac = ok / n
    print(f"{ok}/{n} pixels within tolerance ({frac:.1%})")
    return 0


def cmd_ingest(args) -> int:
    store = DataStore(os.path.join(args.data_dir, "store"))
    if args.inbox:
        archive = args.archive or os.path.join(os.path.dirname(args.inbox.rstrip("/"))
                                               or ".", "archive")
        report = process_inbox(store, args.inbox, archive)
    else:
        observations, report = parse_any(args.file)
        ingest_report = store.ingest_batch(observations)
        report.inserted = ingest_report.inserted
        report.duplicates += ingest_report.duplicates
        report.rejected += ingest_report.rejected
        report.reasons.extend(ingest_report.reasons)
    print(f"inserted {report.inserted}, duplicates {report.duplicates}, "
          f"rejected {report.rejected}")
    for locator, reason in report.reasons:
        print(f"  rejected {locator}: {reason}")
    return 0


def cmd_serve(args) -> int:
    from agrimon.portal import PortalServer
    server = PortalServer(args.data_dir, host=args.host, port=args.port,
                          max_concurrent_jobs=args.max_concurrent_jobs,
                          default_workers=args.workers,
                          default_transport=args.transport,
                          ui_dir=args.ui)
    print(f"portal listening on {server.url} (data dir {args.data_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agrimon",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic scenario")
    p.add_argument("--rows", type=int, default=8)
    p.add_argument("--cols", type=int, default=8)
    p.add_argument("--days", type=int, default=120)
    p.add_argument("--revisit", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--station", default=DEFAULT_STATION)
    p.add_argument("--vary", default="sow_day,wmax_mm,growth_rate",
                   help="comma list of genes the truth field varies")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("assimilate", help="run a regional assimilation job")
    p.add_argument("--raster", required=True)
    p.add_argument("--weather", required=True)
    p.add_argument("--region", help="row0,col0,row1,col1 (default: full grid)")
    p.add_argument("--strategy", choices=StrategyKind.ALL,
                   default=StrategyKind.PIXEL)
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--chunk", type=int, default=1)
    p.add_argument("--groups", type=int)
    p.add_argument("--pop", type=int, default=48)
    p.add_argument("--gens", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--free-genes", default="sow_day,wmax_mm,growth_rate",
                   help="comma list of genes the search may vary")
    p.add_argument("--early-stop", type=float, default=1e-6)
    p.add_argument("--transport", choices=("thread", "process"), default="thread")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assimilate)

    p = sub.add_parser("bench", help="compare distribution strategies")
    p.add_argument("--scenario", help="scenario JSON file (default: built-in)")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("score", help="score a parameter map against truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--tol-sow", type=float, default=TOL_DEFAULTS["sow_day"])
    p.add_argument("--tol-wmax", type=float, default=TOL_DEFAULTS["wmax_mm"])
    p.add_argument("--tol-rate", type=float, default=TOL_DEFAULTS["growth_rate"])
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ingest", help="ingest feed files into the store")
    p.add_argument("--data-dir", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--file")
    group.add_argument("--inbox")
    p.add_argument("--archive")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("serve", help="run the job portal")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--max-concurrent-jobs", type=int, default=1)
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--transport", choices=("thread", "process"), default="thread")
    p.add_argument("--ui", help="directory with a built web UI to serve")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (JobError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
