"""Job portal: HTTP + JSON service over the assimilation runtime.

Endpoints (all JSON unless noted):

    POST /api/jobs                     submit a job, returns {"id": ...}
    GET  /api/jobs/{id}                job record with state and progress
    GET  /api/jobs/{id}/result         per-pixel genomes + rmse (DONE only)
    GET  /api/jobs/{id}/result/agr1/{param}   one parameter as an AGR1 download
    GET  /api/rasters                  registered rasters with dimensions
    GET  /api/rasters/{id}/band/{b}    one band as a JSON matrix
    GET  /api/weather?station=S[&start=day&days=n]   assembled daily series
    GET  /api/metadata/search?q=kw     metadata keyword search
    GET  /api/metrics                  cumulative per-strategy runtime metrics
    GET  /api/health                   liveness probe

Job records are persisted to an append-only log (latest snapshot per id wins
on reload); QUEUED jobs survive a restart and RUNNING jobs are re-queued.
The scheduler picks the highest-priority QUEUED job (ties: submission order)
and runs at most `max_concurrent_jobs` at a time. All job-table mutations are
serialized through one lock; results are immutable once DONE.
"""

import datetime as dt
import itertools
import json
import logging
import os
import re
import threading
from dataclasses import asdict, dataclass, field, fields, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from agrimon.distribute import (
    JobError, ParamMap, Strategy, StrategyKind, StrategyMetrics, run_job,
)
from agrimon.ga import GaConfig
from agrimon.ingest import AppendLog, CoverageError, DataStore
from agrimon.model import GENE_FIELDS, GenomeBounds, ValidationError, DEFAULT_TEMPLATE
from agrimon.raster import (
    RasterGrid, Region, read_raster_file, write_raster,
)

logger = logging.getLogger(__name__)

QUEUED, RUNNING, DONE, FAILED = "QUEUED", "RUNNING", "DONE", "FAILED"
RESULT_PARAMS = GENE_FIELDS + ("rmse",)


class PortalError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class JobSpec:
    raster_id: str
    region: Region
    strategy: Strategy
    ga: GaConfig
    weather_station: str
    priority: int = 0
    submitted_by: str = ""
    workers: int = None        # defaults to the server's worker count
    transport: str = None      # defaults to the server's transport

    def to_json_dict(self) -> dict:
        return {
            "raster_id": self.raster_id,
            "region": asdict(self.region),
            "strategy": {"kind": self.strategy.kind, "chunk": self.strategy.chunk,
                         "groups": self.strategy.groups},
            "ga": asdict(self.ga),
            "weather_station": self.weather_station,
            "priority": self.priority,
            "submitted_by": self.submitted_by,
            "workers": self.workers,
            "transport": self.transport,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "JobSpec":
        try:
            region = Region(**{k: int(v) for k, v in d["region"].items()})
            strat_d = dict(d.get("strategy") or {"kind": StrategyKind.PIXEL})
            strategy = Strategy(strat_d.get("kind", StrategyKind.PIXEL),
                                chunk=int(strat_d.get("chunk", 1) or 1),
                                groups=strat_d.get("groups"))
            ga_d = dict(d.get("ga") or {})
            known = {f.name for f in fields(GaConfig)}
            unknown = set(ga_d) - known
            if unknown:
                raise ValidationError(f"unknown ga fields: {sorted(unknown)}")
            if "free_genes" in ga_d:
                ga_d["free_genes"] = tuple(ga_d["free_genes"])
            ga = replace(GaConfig(), **ga_d)
            spec = JobSpec(
                raster_id=str(d["raster_id"]), region=region, strategy=strategy,
                ga=ga, weather_station=str(d["weather_station"]),
                priority=int(d.get("priority", 0)),
                submitted_by=str(d.get("submitted_by", "")),
                workers=d.get("workers"), transport=d.get("transport"))
        except KeyError as exc:
            raise PortalError(400, f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError, ValidationError) as exc:
            raise PortalError(400, str(exc)) from None
        if not -10 <= spec.priority <= 10:
            raise PortalError(400, "priority must be in [-10, 10]")
        return spec


@dataclass
class JobRecord:
    id: str
    spec: JobSpec
    state: str = QUEUED
    progress_done: int = 0
    progress_total: int = 0
    seq: int = 0
    created_at: str = ""
    started_at: str = None
    finished_at: str = None
    started_seq: int = None
    error: str = None
    metrics: StrategyMetrics = None
    result_path: str = None

    def to_public_dict(self) -> dict:
        metrics = None
        if self.metrics is not None:
            metrics = asdict(self.metrics)
        return {
            "id": self.id, "state": self.state,
            "progress": {"done": self.progress_done, "total": self.progress_total},
            "priority": self.spec.priority,
            "submitted_by": self.spec.submitted_by,
            "raster_id": self.spec.raster_id,
            "region": asdict(self.spec.region),
            "strategy": self.spec.strategy.kind,
            "weather_station": self.spec.weather_station,
            "created_at": self.created_at, "started_at": self.started_at,
            "finished_at": self.finished_at, "error": self.error,
            "metrics": metrics,
        }

    def to_snapshot(self) -> dict:
        d = self.to_public_dict()
        d["spec"] = self.spec.to_json_dict()
        d["seq"] = self.seq
        d["result_path"] = self.result_path
        return d


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


class PortalState:
    """Owns rasters, the data store, the job table and the scheduler."""

    def __init__(self, data_dir, max_concurrent_jobs: int = 1,
                 default_workers: int = 2, default_transport: str = "thread"):
        self.data_dir = str(data_dir)
        os.makedirs(self.data_dir, exist_ok=True)
        self.max_concurrent_jobs = max_concurrent_jobs
        self.default_workers = default_workers
        self.default_transport = default_transport

        self.store = DataStore(os.path.join(self.data_dir, "store"))
        self.rasters = {}
        self._scan_rasters()

        self._lock = threading.RLock()
        self._wakeup = threading.Condition(self._lock)
        self._jobs = {}
        self._job_log = AppendLog(os.path.join(self.data_dir, "jobs.jsonl"))
        self._results_dir = os.path.join(self.data_dir, "results")
        os.makedirs(self._results_dir, exist_ok=True)
        self._seq = itertools.count(self._replay_jobs())
        self._start_counter = itertools.count()
        self.cumulative = {kind: StrategyMetrics(kind, 0, 0, 0)
                           for kind in StrategyKind.ALL}
        self._runners = []
        self._stop = threading.Event()

    # ----- rasters ---------------------------------------------------------

    def _scan_rasters(self):
        raster_dir = os.path.join(self.data_dir, "rasters")
        os.makedirs(raster_dir, exist_ok=True)
        for name in sorted(os.listdir(raster_dir)):
            if name.endswith(".agr1"):
                rid = name[:-len(".agr1")]
                try:
                    self.rasters[rid] = read_raster_file(os.path.join(raster_dir, name))
                except Exception as exc:
                    logger.warning("skipping unreadable raster %s: %s", name, exc)

    def register_raster(self, raster_id: str, grid: RasterGrid) -> None:
        self.rasters[raster_id] = grid

    # ----- persistence -----------------------------------------------------

    def _replay_jobs(self) -> int:
        snapshots = {}
        for raw in self._job_log.read_all():
            snapshots[raw["id"]] = raw
        max_seq = -1
        for raw in sorted(snapshots.values(), key=lambda r: r["seq"]):
            spec = JobSpec.from_json_dict(raw["spec"])
            record = JobRecord(
                id=raw["id"], spec=spec, state=raw["state"], seq=raw["seq"],
                progress_done=raw["progress"]["done"],
                progress_total=raw["progress"]["total"],
                created_at=raw["created_at"], started_at=raw["started_at"],
                finished_at=raw["finished_at"], error=raw["error"],
                result_path=raw.get("result_path"))
            if record.state == RUNNING:
                # the previous process died mid-run; run it again
                record.state = QUEUED
                record.progress_done = 0
                record.started_at = None
            self._jobs[record.id] = record
            max_seq = max(max_seq, record.seq)
        return max_seq + 1

    def _persist(self, record: JobRecord) -> None:
        self._job_log.append_many([record.to_snapshot()])

    # ----- scheduler -------------------------------------------------------

    def start_scheduler(self) -> None:
        if self._runners:
            return
        self._stop.clear()
        for i in range(self.max_concurrent_jobs):
            t = threading.Thread(target=self._runner_loop, daemon=True,
                                 name=f"agrimon-runner-{i}")
            t.start()
            self._runners.append(t)

    def stop_scheduler(self) -> None:
        self._stop.set()
        with self._wakeup:
            self._wakeup.notify_all()
        for t in self._runners:
            t.join(timeout=60)
        self._runners = []

    def _pick_next(self):
        queued = [r for r in self._jobs.values() if r.state == QUEUED]
        if not queued:
            return None
        return min(queued, key=lambda r: (-r.spec.priority, r.seq))

    def _runner_loop(self):
        while not self._stop.is_set():
            with self._wakeup:
                record = self._pick_next()
                if record is None:
                    self._wakeup.wait(timeout=0.2)
                    continue
                record.state = RUNNING
                record.started_at = _now()
                record.started_seq = next(self._start_counter)
                self._persist(record)
            try:
                self._execute(record)
            except Exception as exc:
                logger.exception("job %s failed", record.id)
                with self._lock:
                    record.state = FAILED
                    record.error = (f"{exc} (pixel {exc.pixel})"
                                    if isinstance(exc, JobError) and exc.pixel
                                    else str(exc))
                    record.finished_at = _now()
                    self._persist(record)
            with self._wakeup:
                self._wakeup.notify_all()

    def _execute(self, record: JobRecord) -> None:
        spec = record.spec
        grid = self.rasters[spec.raster_id]
        weather = self._station_series(spec.weather_station, grid.bands)
        bounds = GenomeBounds.default(weather.season_len)

        def on_progress(done, total):
            with self._lock:
                if record.state == RUNNING:
                    record.progress_done = max(record.progress_done, done)
                    record.progress_total = total

        param_map, metrics = run_job(
            grid, spec.region, weather, spec.ga, bounds, DEFAULT_TEMPLATE,
            spec.strategy, spec.workers or self.default_workers,
            transport=spec.transport or self.default_transport,
            on_progress=on_progress)

        result_path = os.path.join(self._results_dir, f"{record.id}.json")
        payload = param_map.to_json_dict()
        payload["job_id"] = record.id
        with open(result_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
        with self._lock:
            record.progress_done = record.progress_total = metrics.pixels
            record.metrics = metrics
            record.result_path = result_path
            record.state = DONE
            record.finished_at = _now()
            self._persist(record)
            agg = self.cumulative[spec.strategy.kind]
            agg.messages += metrics.messages
            agg.bytes += metrics.bytes
            agg.tasks += metrics.tasks
            agg.retries += metrics.retries
            agg.wall_ms += metrics.wall_ms
            agg.pixels += metrics.pixels
            agg.workers = metrics.workers

    # ----- station weather -------------------------------------------------

    def _station_series(self, station: str, bands: int):
        start, days = self.store.station_coverage(station)
        if start is None:
            raise PortalError(404, f"no weather for station {station!r}")
        if days < bands:
            raise PortalError(400,
                              f"station {station!r} covers {days} days, "
                              f"fewer than the raster's {bands} bands")
        series, _ = self.store.query_weather(station, start, days)
        return series

    # ----- API operations ---------------------------------------------------

    def submit_job(self, payload: dict) -> str:
        spec = JobSpec.from_json_dict(payload)
        grid = self.rasters.get(spec.raster_id)
        if grid is None:
            raise PortalError(404, f"unknown raster {spec.raster_id!r}")
        try:
            spec.region.validate_within(grid.rows, grid.cols)
            spec.ga.validate()
            if spec.workers is not None and int(spec.workers) < 1:
                raise ValidationError("workers must be >= 1")
            weather = self._station_series(spec.weather_station, grid.bands)
            from agrimon.distribute import infer_revisit
            infer_revisit(weather.season_len, grid.bands)
        except CoverageError as exc:
            raise PortalError(400, str(exc)) from None
        except ValidationError as exc:
            raise PortalError(400, str(exc)) from None

        with self._wakeup:
            seq = next(self._seq)
            record = JobRecord(id=f"job-{seq:06d}", spec=spec, seq=seq,
                               created_at=_now(),
                               progress_total=spec.region.n_pixels)
            self._jobs[record.id] = record
            self._persist(record)
            self._wakeup.notify_all()
        return record.id

    def job_record(self, job_id: str) -> JobRecord:
        with self._lock:
            record = self._jobs.get(job_id)
        if record is None:
            raise PortalError(404, f"unknown job {job_id!r}")
        return record

    def job_status(self, job_id: str) -> dict:
        with self._lock:
            return self.job_record(job_id).to_public_dict()

    def job_result(self, job_id: str) -> dict:
        record = self.job_record(job_id)
        with self._lock:
            if record.state != DONE:
                raise PortalError(409, f"job {job_id} is {record.state}, not DONE")
            path = record.result_path
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def job_result_raster(self, job_id: str, param: str) -> bytes:
        if param not in RESULT_PARAMS:
            raise PortalError(404, f"unknown parameter {param!r}")
        result = self.job_result(job_id)
        param_map = ParamMap.from_json_dict(result)
        region = param_map.region
        values = np.full((1, region.height, region.width), -9999.0)
        for (r, c), res in param_map.results.items():
            v = res.rmse if param == "rmse" else getattr(res.genome, param)
            values[0, r - region.row0, c - region.col0] = float(v)
        return write_raster(RasterGrid(region.height, region.width, 1,
                                       -9999.0, values))

    def list_rasters(self) -> list:
        return [{"id": rid, "rows": g.rows, "cols": g.cols, "bands": g.bands,
                 "nodata": g.nodata}
                for rid, g in sorted(self.rasters.items())]

    def raster_band(self, raster_id: str, band: int) -> dict:
        grid = self.rasters.get(raster_id)
        if grid is None:
            raise PortalError(404, f"unknown raster {raster_id!r}")
        if not 0 <= band < grid.bands:
            raise PortalError(404, f"band {band} out of range [0, {grid.bands})")
        return {"id": raster_id, "band": band, "rows": grid.rows,
                "cols": grid.cols, "nodata": grid.nodata,
                "values": grid.values[band].tolist()}

    def weather(self, station: str, start=None, days=None) -> dict:
        cov_start, cov_days = self.store.station_coverage(station)
        if cov_start is None:
            raise PortalError(404, f"no weather for station {station!r}")
        if start is None:
            start, days = cov_start, cov_days
        try:
            series, warnings = self.store.query_weather(station, start,
                                                        days or cov_days)
        except CoverageError as exc:
            raise PortalError(400, str(exc)) from None
        return {"station": station, "start_date": str(start),
                "days": series.season_len,
                "records": [asdict(r) for r in series.records],
                "warnings": warnings}

    def metrics_summary(self) -> dict:
        with self._lock:
            by_state = {}
            for record in self._jobs.values():
                by_state[record.state] = by_state.get(record.state, 0) + 1
            return {
                "queue_depth": by_state.get(QUEUED, 0),
                "running": by_state.get(RUNNING, 0),
                "jobs_by_state": by_state,
                "strategies": {kind: asdict(m)
                               for kind, m in self.cumulative.items()},
            }

    def search_metadata(self, keyword: str) -> list:
        return [asdict(e) for e in self.store.search_metadata(keyword)]


_ROUTES = [
    ("GET", re.compile(r"^/api/health$"), "health"),
    ("GET", re.compile(r"^/api/rasters$"), "rasters"),
    ("GET", re.compile(r"^/api/rasters/(?P<rid>[^/]+)/band/(?P<band>\d+)$"), "band"),
    ("GET", re.compile(r"^/api/jobs/(?P<jid>[^/]+)/result/agr1/(?P<param>[^/]+)$"),
     "result_agr1"),
    ("GET", re.compile(r"^/api/jobs/(?P<jid>[^/]+)/result$"), "result"),
    ("GET", re.compile(r"^/api/jobs/(?P<jid>[^/]+)$"), "status"),
    ("POST", re.compile(r"^/api/jobs$"), "submit"),
    ("GET", re.compile(r"^/api/weather$"), "weather"),
    ("GET", re.compile(r"^/api/metrics$"), "metrics"),
    ("GET", re.compile(r"^/api/metadata/search$"), "metadata_search"),
]


class _Handler(BaseHTTPRequestHandler):
    state: PortalState = None
    ui_dir: str = None
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        logger.debug("http: " + fmt, *args)

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, payload) -> None:
        self._send(status, json.dumps(payload).encode(), "application/json")

    def _dispatch(self, method: str) -> None:
        parsed = urlparse(self.path)
        query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
        for verb, pattern, name in _ROUTES:
            if verb != method:
                continue
            match = pattern.match(parsed.path)
            if match:
                try:
                    self._handle(name, match.groupdict(), query)
                except PortalError as exc:
                    self._send_json(exc.status, {"error": exc.message})
                except Exception as exc:
                    logger.exception("internal error on %s", self.path)
                    self._send_json(500, {"error": str(exc)})
                return
        if method == "GET" and self.ui_dir:
            self._serve_static(parsed.path)
            return
        self._send_json(404, {"error": f"no route for {method} {parsed.path}"})

    def _serve_static(self, path: str) -> None:
        rel = path.lstrip("/") or "index.html"
        full = os.path.realpath(os.path.join(self.ui_dir, rel))
        if not full.startswith(os.path.realpath(self.ui_dir)) or not os.path.isfile(full):
            self._send_json(404, {"error": f"no route for GET {path}"})
            return
        ctype = {"html": "text/html", "js": "text/javascript",
                 "css": "text/css", "map": "application/json",
                 "svg": "image/svg+xml"}.get(full.rsplit(".", 1)[-1],
                                             "application/octet-stream")
        with open(full, "rb") as fh:
            self._send(200, fh.read(), ctype)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            return json.loads(raw.decode() or "{}")
        except json.JSONDecodeError as exc:
            raise PortalError(400, f"invalid JSON body: {exc}") from None

    def _handle(self, name: str, params: dict, query: dict) -> None:
        state = self.state
        if name == "health":
            self._send_json(200, {"status": "ok"})
        elif name == "rasters":
            self._send_json(200, state.list_rasters())
        elif name == "band":
            self._send_json(200, state.raster_band(params["rid"], int(params["band"])))
        elif name == "submit":
            job_id = state.submit_job(self._read_body())
            self._send_json(201, {"id": job_id})
        elif name == "status":
            self._send_json(200, state.job_status(params["jid"]))
        elif name == "result":
            self._send_json(200, state.job_result(params["jid"]))
        elif name == "result_agr1":
            data = state.job_result_raster(params["jid"], params["param"])
            self._send(200, data, "application/octet-stream")
        elif name == "weather":
            station = query.get("station")
            if not station:
                raise PortalError(400, "station query parameter required")
            days = int(query["days"]) if "days" in query else None
            self._send_json(200, state.weather(station, query.get("start"), days))
        elif name == "metrics":
            self._send_json(200, state.metrics_summary())
        elif name == "metadata_search":
            self._send_json(200, state.search_metadata(query.get("q", "")))

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_OPTIONS(self):
        self._send(204, b"", "text/plain")


class PortalServer:
    """Bundles PortalState with a ThreadingHTTPServer."""

    def __init__(self, data_dir, host: str = "127.0.0.1", port: int = 0,
                 max_concurrent_jobs: int = 1, default_workers: int = 2,
                 default_transport: str = "thread", ui_dir=None):
        self.state = PortalState(data_dir, max_concurrent_jobs,
                                 default_workers, default_transport)
        handler = type("BoundHandler", (_Handler,),
                       {"state": self.state,
                        "ui_dir": str(ui_dir) if ui_dir else None})
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._thread = None

    @property
    def address(self):
        return self.httpd.server_address

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> None:
        self.state.start_scheduler()
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        daemon=True, name="agrimon-http")
        self._thread.start()

    def serve_forever(self) -> None:
        self.state.start_scheduler()
        try:
            self.httpd.serve_forever()
        finally:
            self.state.stop_scheduler()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=10)
        self.state.stop_scheduler()
