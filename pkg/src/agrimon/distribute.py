"""Master-worker execution of a regional assimilation job.

Three task-distribution strategies over one worker pool:

  PIXEL         workers run the whole per-pixel GA for chunks of pixels;
                one task per chunk, 2*ceil(P/chunk) messages.
  POPULATION    the master runs each pixel's GA itself and farms every
                fitness evaluation round out as per-worker genome slices;
                2 * P * (generations+1) * min(workers, pop) messages.
  HIERARCHICAL  workers are partitioned into g groups, each driven by a
                group-leader control loop; pixels are dealt to groups
                (2 messages each) and every evaluation round is split
                across the group members, 2 * group_size messages per round.

A message is one logical task send or one reply, regardless of transport
framing; every payload is serialized with pickle and its byte length counted.
Shutdown/control frames are not tasks and are not counted. Failed tasks are
retried once on another worker (counted under `retries`, not `messages`), a
second failure fails the job naming the pixel.

Every strategy assimilates pixel (r, c) with the identical per-pixel seed
mix(config.seed, r, c), and fitness replies are merged by genome index, so
all strategies and worker counts produce bit-identical ParamMaps.
"""

import math
import pickle
import queue
import threading
import time
from dataclasses import dataclass, field

from agrimon.ga import GaConfig, PixelResult, assimilate_pixel, pixel_config
from agrimon.model import CropGenome, GenomeBounds, ValidationError, WeatherSeries
from agrimon.raster import RasterGrid, Region, extract_region
from agrimon.transport import FaultSpec, Task, WorkerContext, make_pool

_PICKLE = pickle.HIGHEST_PROTOCOL


class JobError(RuntimeError):
    """A job could not complete; carries the offending pixel when known."""

    def __init__(self, message: str, pixel=None):
        super().__init__(message)
        self.pixel = pixel


class StrategyKind:
    PIXEL = "pixel"
    POPULATION = "population"
    HIERARCHICAL = "hierarchical"
    ALL = (PIXEL, POPULATION, HIERARCHICAL)


@dataclass(frozen=True)
class Strategy:
    kind: str
    chunk: int = 1          # PIXEL: pixels per task
    groups: int = None      # HIERARCHICAL: worker groups; default floor(sqrt(n))

    def __post_init__(self):
        if self.kind not in StrategyKind.ALL:
            raise ValidationError(f"unknown strategy kind {self.kind!r}")
        if self.chunk < 1:
            raise ValidationError("chunk must be >= 1")
        if self.groups is not None and self.groups < 1:
            raise ValidationError("groups must be >= 1")

    def n_groups(self, n_workers: int) -> int:
        g = self.groups if self.groups is not None else max(1, math.isqrt(n_workers))
        return min(g, n_workers)


@dataclass
class StrategyMetrics:
    strategy: str
    workers: int
    pixels: int
    generations: int
    messages: int = 0
    bytes: int = 0
    tasks: int = 0
    retries: int = 0
    wall_ms: float = 0.0
    busy_ms: list = field(default_factory=list)
    predicted_messages: int = 0
    speedup: float = None


@dataclass
class ParamMap:
    """Per-pixel assimilation results for a job region (absolute coordinates)."""

    region: Region
    seed: int
    results: dict  # (row, col) -> PixelResult

    def to_json_dict(self) -> dict:
        return {
            "region": {"row0": self.region.row0, "col0": self.region.col0,
                       "row1": self.region.row1, "col1": self.region.col1},
            "seed": self.seed,
            "pixels": [
                {"row": r, "col": c, "genome": res.genome.as_dict(),
                 "rmse": res.rmse, "generations_run": res.generations_run,
                 "evaluations": res.evaluations}
                for (r, c), res in sorted(self.results.items())
            ],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "ParamMap":
        region = Region(**d["region"])
        results = {}
        for p in d["pixels"]:
            results[(p["row"], p["col"])] = PixelResult(
                CropGenome.from_dict(p["genome"]), p["rmse"],
                p["generations_run"], p["evaluations"])
        return ParamMap(region, d["seed"], results)


@dataclass(frozen=True)
class PlannedTask:
    kind: str
    pixels: tuple
    group: int = None
    rounds: int = 0
    batches_per_round: int = 0


@dataclass
class TaskPlan:
    strategy: Strategy
    n_workers: int
    planned: list
    predicted_messages: int
    predicted_tasks: int


def infer_revisit(season_len: int, bands: int) -> int:
    """Revisit interval implied by season length and band count."""
    if bands < 1 or season_len < 1:
        raise ValidationError("season_len and bands must be >= 1")
    k = math.ceil(season_len / bands)
    if math.ceil(season_len / k) != bands:
        raise ValidationError(
            f"no integer revisit interval yields {bands} samples over {season_len} days")
    return k


def _group_sizes(n_workers: int, g: int) -> list:
    base, rem = divmod(n_workers, g)
    return [base + (1 if j < rem else 0) for j in range(g)]


def _eval_rounds(config: GaConfig) -> int:
    return config.generations + 1


def _plan_for_pixels(pixels, strategy: Strategy, n_workers: int,
                     config: GaConfig) -> TaskPlan:
    if n_workers < 1:
        raise ValidationError("n_workers must be >= 1")
    if not pixels:
        raise ValidationError("zero-pixel region: nothing to plan")
    config.validate()
    rounds = _eval_rounds(config)
    planned = []
    if strategy.kind == StrategyKind.PIXEL:
        for i in range(0, len(pixels), strategy.chunk):
            planned.append(PlannedTask("pixel-batch",
                                       tuple(pixels[i:i + strategy.chunk])))
        tasks = len(planned)
        messages = 2 * tasks
    elif strategy.kind == StrategyKind.POPULATION:
        batches = min(n_workers, config.pop_size)
        for px in pixels:
            planned.append(PlannedTask("fitness-batch", (px,), rounds=rounds,
                                       batches_per_round=batches))
        tasks = len(pixels) * rounds * batches
        messages = 2 * tasks
    else:
        g = strategy.n_groups(n_workers)
        sizes = _group_sizes(n_workers, g)
        tasks = 0
        for i, px in enumerate(pixels):
            group = i % g
            batches = min(sizes[group], config.pop_size)
            planned.append(PlannedTask("pixel-batch", (px,), group=group,
                                       rounds=rounds, batches_per_round=batches))
            tasks += 1 + rounds * batches  # one hand-off plus the fitness batches
        messages = 2 * tasks
    return TaskPlan(strategy, n_workers, planned, messages, tasks)


def plan_tasks(region: Region, strategy: Strategy, n_workers: int,
               config: GaConfig) -> TaskPlan:
    """Plan a job over every pixel of `region` (nodata masking happens at run
    time; predictions assume all pixels are processed)."""
    return _plan_for_pixels(list(region.pixels()), strategy, n_workers, config)


class _Accounting:
    """Thread-safe message/byte/busy-time counters shared by all dispatchers."""

    def __init__(self, n_workers: int):
        self._lock = threading.Lock()
        self.messages = 0
        self.bytes = 0
        self.tasks = 0
        self.retries = 0
        self.busy_s = [0.0] * n_workers
        self._next_tid = 0

    def next_task_id(self) -> int:
        with self._lock:
            tid = self._next_tid
            self._next_tid += 1
            return tid

    def on_send(self, nbytes: int, retry: bool) -> None:
        with self._lock:
            self.bytes += nbytes
            if retry:
                self.retries += 1
            else:
                self.messages += 1
                self.tasks += 1

    def on_reply(self, nbytes: int, worker_id, busy_s: float, retry: bool) -> None:
        with self._lock:
            self.bytes += nbytes
            if not retry:
                self.messages += 1
            if worker_id is not None and busy_s:
                self.busy_s[worker_id] += busy_s


@dataclass
class _Attempt:
    task: Task
    worker: int
    retried: bool


class _Dispatcher:
    """Sends task batches to a fixed worker set and collects replies.

    Owns one event queue (its share of the demultiplexed pool events); retries
    each failed task once on the next live worker.
    """

    def __init__(self, pool, acct: _Accounting, events: queue.Queue, workers: list):
        self.pool = pool
        self.acct = acct
        self.events = events
        self.workers = list(workers)
        self.live = set(workers)

    def _frame(self, task: Task) -> bytes:
        return pickle.dumps({"task": task}, protocol=_PICKLE)

    def _send(self, task: Task, worker: int, retried: bool, in_flight: dict) -> None:
        frame = self._frame(task)
        self.acct.on_send(len(frame), retried)
        in_flight[task.task_id] = _Attempt(task, worker, retried)
        self.pool.send(worker, frame)

    def _next_worker(self, after: int):
        order = self.workers
        start = order.index(after) if after in order else 0
        for off in range(1, len(order) + 1):
            cand = order[(start + off) % len(order)]
            if cand in self.live and cand != after:
                return cand
        return None

    def run(self, assignments, on_result=None) -> dict:
        """assignments: [(Task, worker_id)]; returns {task_id: payload}."""
        in_flight = {}
        for task, worker in assignments:
            self._send(task, worker, False, in_flight)
        results = {}
        while in_flight:
            kind, wid, frame = self.events.get()
            if kind == "dead":
                self.live.discard(wid)
                stranded = [a for a in in_flight.values() if a.worker == wid]
                for att in stranded:
                    del in_flight[att.task.task_id]
                    self._retry_or_fail(att, "worker died", in_flight)
                continue
            reply = pickle.loads(frame)
            att = in_flight.pop(reply["task_id"], None)
            if att is None:
                continue
            self.acct.on_reply(len(frame), wid, reply.get("busy_s", 0.0), att.retried)
            if reply["ok"]:
                results[att.task.task_id] = reply["payload"]
                if on_result is not None:
                    on_result(att.task, reply["payload"])
            else:
                self._retry_or_fail(att, reply["error"], in_flight)
        return results

    def _retry_or_fail(self, att: _Attempt, error: str, in_flight: dict) -> None:
        pixel = att.task.pixel if att.task.pixel is not None else att.task.pixels
        if att.retried:
            raise JobError(f"task for pixel {pixel} failed after retry: {error}",
                           pixel=pixel)
        target = self._next_worker(att.worker)
        if target is None:
            raise JobError(f"task for pixel {pixel} failed and no worker left: {error}",
                           pixel=pixel)
        retry_task = Task(self.acct.next_task_id(), att.task.kind, att.task.pixels,
                          att.task.pixel, att.task.genomes, att.task.index0)
        self._send(retry_task, target, True, in_flight)


def _split_even(n: int, parts: int) -> list:
    base, rem = divmod(n, parts)
    sizes = [base + (1 if i < rem else 0) for i in range(parts)]
    return [s for s in sizes if s > 0]


def _farm_evaluator(dispatcher: _Dispatcher, acct: _Accounting, pixel):
    """Batch evaluator that splits a population across the dispatcher's workers."""

    def evaluate(genomes):
        genomes = list(genomes)
        members = dispatcher.workers
        sizes = _split_even(len(genomes), min(len(members), len(genomes)))
        assignments = []
        index0 = 0
        for b, size in enumerate(sizes):
            task = Task(acct.next_task_id(), "fitness-batch", pixel=pixel,
                        genomes=tuple(genomes[index0:index0 + size]), index0=index0)
            assignments.append((task, members[b % len(members)]))
            index0 += size
        replies = dispatcher.run(assignments)
        rmses = [None] * len(genomes)
        for payload in replies.values():
            i0 = payload["index0"]
            rmses[i0:i0 + len(payload["rmses"])] = payload["rmses"]
        return rmses

    return evaluate


class _Demux:
    """Routes pool events to per-owner queues by worker id."""

    def __init__(self, pool, owner_of: dict, queues: list):
        self._pool = pool
        self._owner_of = owner_of
        self._queues = queues
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, daemon=True,
                                        name="agrimon-demux")
        self._thread.start()

    def _loop(self):
        src = self._pool.events()
        while not self._stop.is_set():
            try:
                event = src.get(timeout=0.05)
            except queue.Empty:
                continue
            self._queues[self._owner_of[event[1]]].put(event)

    def stop(self):
        self._stop.set()
        self._thread.join(timeout=5)


def run_job(grid: RasterGrid, region: Region, weather: WeatherSeries,
            config: GaConfig, bounds: GenomeBounds, template: CropGenome,
            strategy: Strategy, n_workers: int, transport="thread",
            on_progress=None, fault: FaultSpec = None):
    """Assimilate every non-nodata pixel of `region` and return
    (ParamMap, StrategyMetrics).

    The result is bit-identical to running `assimilate_pixel` sequentially
    with per-pixel seeds mix(config.seed, row, col), whatever the strategy,
    worker count or transport.
    """
    region.validate_within(grid.rows, grid.cols)
    config.validate()
    if n_workers < 1:
        raise ValidationError("n_workers must be >= 1")
    revisit = infer_revisit(weather.season_len, grid.bands)
    sub, _ = extract_region(grid, region)
    pixels = [(r, c) for (r, c) in region.pixels() if not grid.is_nodata_pixel(r, c)]
    if not pixels:
        raise ValidationError("zero-pixel region: every pixel is nodata")
    plan = _plan_for_pixels(pixels, strategy, n_workers, config)

    ctx = WorkerContext(sub_values=sub.values, nodata=grid.nodata,
                        row0=region.row0, col0=region.col0, revisit_days=revisit,
                        weather=weather, config=config, bounds=bounds,
                        template=template, fault=fault)
    acct = _Accounting(n_workers)
    results = {}
    total = len(pixels)

    def progress():
        if on_progress is not None:
            on_progress(len(results), total)

    started = time.perf_counter()
    pool = make_pool(transport, n_workers, ctx)
    try:
        if strategy.kind == StrategyKind.PIXEL:
            _run_pixel(pool, acct, plan, n_workers, results, progress)
        elif strategy.kind == StrategyKind.POPULATION:
            _run_population(pool, acct, ctx, pixels, n_workers, results, progress)
        else:
            _run_hierarchical(pool, acct, ctx, pixels, strategy, n_workers,
                              results, progress)
    finally:
        pool.shutdown()
    wall_ms = (time.perf_counter() - started) * 1000.0

    metrics = StrategyMetrics(
        strategy=strategy.kind, workers=n_workers, pixels=total,
        generations=config.generations, messages=acct.messages,
        bytes=acct.bytes, tasks=acct.tasks, retries=acct.retries,
        wall_ms=wall_ms, busy_ms=[s * 1000.0 for s in acct.busy_s],
        predicted_messages=plan.predicted_messages)
    return ParamMap(region, config.seed, results), metrics


def _run_pixel(pool, acct, plan, n_workers, results, progress):
    events = queue.Queue()
    demux = _Demux(pool, {wid: 0 for wid in range(n_workers)}, [events])
    try:
        dispatcher = _Dispatcher(pool, acct, events, list(range(n_workers)))
        assignments = []
        for i, planned in enumerate(plan.planned):
            task = Task(acct.next_task_id(), "pixel-batch", pixels=planned.pixels)
            assignments.append((task, i % n_workers))

        def on_result(task, payload):
            for (coords, res) in payload["results"]:
                results[tuple(coords)] = res
            progress()

        dispatcher.run(assignments, on_result)
    finally:
        demux.stop()


def _run_population(pool, acct, ctx, pixels, n_workers, results, progress):
    events = queue.Queue()
    demux = _Demux(pool, {wid: 0 for wid in range(n_workers)}, [events])
    try:
        dispatcher = _Dispatcher(pool, acct, events, list(range(n_workers)))
        for (r, c) in pixels:
            obs = ctx.observed(r, c)
            evaluator = _farm_evaluator(dispatcher, acct, (r, c))
            res = assimilate_pixel(obs, ctx.weather, pixel_config(ctx.config, r, c),
                                   ctx.bounds, ctx.template, evaluate_batch=evaluator)
            results[(r, c)] = res
            progress()
    finally:
        demux.stop()


def _run_hierarchical(pool, acct, ctx, pixels, strategy, n_workers,
                      results, progress):
    g = strategy.n_groups(n_workers)
    sizes = _group_sizes(n_workers, g)
    members, start = [], 0
    for size in sizes:
        members.append(list(range(start, start + size)))
        start += size

    group_events = [queue.Queue() for _ in range(g)]
    owner_of = {}
    for j, mem in enumerate(members):
        for wid in mem:
            owner_of[wid] = j
    demux = _Demux(pool, owner_of, group_events)

    inboxes = [queue.Queue() for _ in range(g)]
    done = queue.Queue()

    def leader(j: int):
        dispatcher = _Dispatcher(pool, acct, group_events[j], members[j])
        while True:
            pixel = inboxes[j].get()
            if pixel is None:
                return
            try:
                r, c = pixel
                obs = ctx.observed(r, c)
                evaluator = _farm_evaluator(dispatcher, acct, pixel)
                res = assimilate_pixel(obs, ctx.weather,
                                       pixel_config(ctx.config, r, c),
                                       ctx.bounds, ctx.template,
                                       evaluate_batch=evaluator)
                done.put(("ok", pixel, res))
            except Exception as exc:
                done.put(("error", pixel, exc))

    leaders = [threading.Thread(target=leader, args=(j,), daemon=True,
                                name=f"agrimon-leader-{j}") for j in range(g)]
    for t in leaders:
        t.start()

    failure = None
    try:
        # deal pixels to groups; the hand-off and its completion are messages
        for i, pixel in enumerate(pixels):
            payload = pickle.dumps({"pixel": pixel}, protocol=_PICKLE)
            acct.on_send(len(payload), False)
            inboxes[i % g].put(pixel)
        for _ in pixels:
            status, pixel, value = done.get()
            if status == "error":
                if failure is None:
                    failure = value
                continue
            reply = pickle.dumps({"pixel": pixel, "result": value}, protocol=_PICKLE)
            acct.on_reply(len(reply), None, 0.0, False)
            results[pixel] = value
            progress()
    finally:
        for inbox in inboxes:
            inbox.put(None)
        for t in leaders:
            t.join(timeout=30)
        demux.stop()
    if failure is not None:
        if isinstance(failure, JobError):
            raise failure
        raise JobError(f"group leader failed: {failure}")
