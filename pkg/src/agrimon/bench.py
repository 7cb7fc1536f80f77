"""Strategy comparison harness.

Runs the same synthetic job under each distribution strategy and reports the
measured message counts, payload bytes, wall time and (optionally) speedup
against a single-worker run. Emits CSV with the fixed header

    strategy,workers,pixels,generations,messages,bytes,wall_ms,speedup

plus a human-readable summary that includes the predicted-vs-actual message
check from the task planner.
"""

import io
import json
from dataclasses import dataclass, fields

from agrimon.distribute import Strategy, StrategyKind, plan_tasks, run_job
from agrimon.ga import GaConfig
from agrimon.model import GenomeBounds, ValidationError
from agrimon.raster import Region, synthesize_truth
from agrimon.synth import SYNTH_TEMPLATE, make_truth_field, synthetic_weather

CSV_HEADER = "strategy,workers,pixels,generations,messages,bytes,wall_ms,speedup"


@dataclass
class BenchScenario:
    rows: int = 16
    cols: int = 16
    days: int = 20
    revisit: int = 8
    noise: float = 0.0
    seed: int = 20250808
    workers: int = 4
    pop_size: int = 32
    generations: int = 50
    chunk: int = 1
    groups: int = None
    transport: str = "thread"
    strategies: tuple = (StrategyKind.PIXEL, StrategyKind.HIERARCHICAL,
                         StrategyKind.POPULATION)
    speedup_baseline: bool = False

    @staticmethod
    def from_json_dict(d: dict) -> "BenchScenario":
        known = {f.name for f in fields(BenchScenario)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown scenario keys: {sorted(unknown)}")
        scenario = BenchScenario(**d)
        if isinstance(scenario.strategies, list):
            scenario.strategies = tuple(scenario.strategies)
        return scenario

    @staticmethod
    def from_json_file(path) -> "BenchScenario":
        with open(path) as fh:
            return BenchScenario.from_json_dict(json.load(fh))


def default_scenario() -> BenchScenario:
    return BenchScenario()


@dataclass
class BenchRow:
    strategy: str
    workers: int
    pixels: int
    generations: int
    messages: int
    bytes: int
    wall_ms: float
    speedup: float
    predicted_messages: int
    tasks: int
    retries: int
    busy_ms: list


@dataclass
class BenchReport:
    scenario: BenchScenario
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for row in self.rows:
            speedup = f"{row.speedup:.3f}" if row.speedup is not None else ""
            buf.write(f"{row.strategy},{row.workers},{row.pixels},{row.generations},"
                      f"{row.messages},{row.bytes},{row.wall_ms:.1f},{speedup}\n")
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"benchmark: {self.scenario.rows}x{self.scenario.cols} pixels, "
                 f"{self.scenario.workers} workers, pop {self.scenario.pop_size}, "
                 f"{self.scenario.generations} generations, "
                 f"transport {self.scenario.transport}"]
        for row in self.rows:
            check = "OK" if row.messages == row.predicted_messages else "MISMATCH"
            lines.append(
                f"  {row.strategy:>12}: messages {row.messages} "
                f"(predicted {row.predicted_messages}, {check}), "
                f"bytes {row.bytes}, tasks {row.tasks}, wall {row.wall_ms:.0f} ms"
                + (f", speedup {row.speedup:.2f}x" if row.speedup is not None else ""))
        ordered = sorted(self.rows, key=lambda r: r.messages)
        lines.append("  message ordering: "
                     + " < ".join(r.strategy for r in ordered))
        return "\n".join(lines)


def _strategy_for(scenario: BenchScenario, kind: str) -> Strategy:
    return Strategy(kind, chunk=scenario.chunk, groups=scenario.groups)


def bench_strategies(scenario: BenchScenario = None) -> BenchReport:
    """Run every strategy in the scenario and collect comparison rows."""
    scenario = scenario or default_scenario()
    weather = synthetic_weather(scenario.days, scenario.seed)
    field = make_truth_field(scenario.rows, scenario.cols, scenario.seed,
                             scenario.days)
    grid = synthesize_truth(field, weather, scenario.revisit, scenario.noise,
                            scenario.seed)
    region = Region(0, 0, scenario.rows - 1, scenario.cols - 1)
    bounds = GenomeBounds.default(scenario.days)
    # fixed evaluation schedule: early stop off so counts match the plan
    config = GaConfig(pop_size=scenario.pop_size, generations=scenario.generations,
                      seed=scenario.seed, early_stop_rmse=0.0)

    rows = []
    for kind in scenario.strategies:
        strategy = _strategy_for(scenario, kind)
        plan = plan_tasks(region, strategy, scenario.workers, config)
        _, metrics = run_job(grid, region, weather, config, bounds, SYNTH_TEMPLATE,
                             strategy, scenario.workers,
                             transport=scenario.transport)
        speedup = None
        if scenario.speedup_baseline and scenario.workers > 1:
            _, base = run_job(grid, region, weather, config, bounds, SYNTH_TEMPLATE,
                              strategy, 1, transport=scenario.transport)
            speedup = base.wall_ms / metrics.wall_ms
        rows.append(BenchRow(
            strategy=kind, workers=scenario.workers, pixels=metrics.pixels,
            generations=scenario.generations, messages=metrics.messages,
            bytes=metrics.bytes, wall_ms=metrics.wall_ms, speedup=speedup,
            predicted_messages=plan.predicted_messages, tasks=metrics.tasks,
            retries=metrics.retries, busy_ms=metrics.busy_ms))
    return BenchReport(scenario, rows)
