"""Message-passing worker pools.

Workers receive pickled task frames and return pickled reply frames; they
share nothing with the master beyond the immutable bootstrap context handed
to them at start. Two interchangeable transports:

  * "thread"  - worker threads fed through in-process queues. Frames are still
                serialized bytes, so even here workers operate on copies.
  * "process" - worker OS processes connected over localhost TCP sockets with
                length-prefixed frames; validates the message-only contract
                and provides real parallelism.

The master sees a uniform interface: `send(worker_id, frame)` plus a single
`events()` queue yielding ("reply", worker_id, frame) and ("dead", worker_id,
None) items.
"""

import multiprocessing
import pickle
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass

from agrimon.ga import assimilate_pixel, fitness, pixel_config
from agrimon.model import ObservableSeries

_LEN = struct.Struct("<I")
_HELLO_TIMEOUT_S = 15.0


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class FaultSpec:
    """Test hook: make a worker (or, with worker_id=None, every worker) fail
    its first `failures` tasks."""

    worker_id: int = None
    failures: int = 1
    message: str = "injected fault"


@dataclass(frozen=True)
class Task:
    task_id: int
    kind: str                      # "pixel-batch" | "fitness-batch"
    pixels: tuple = ()             # pixel-batch payload, absolute coords
    pixel: tuple = None            # fitness-batch target pixel
    genomes: tuple = ()            # fitness-batch genome slice
    index0: int = 0                # population index of genomes[0]

    def __post_init__(self):
        if self.kind == "pixel-batch":
            if not self.pixels:
                raise ValueError("pixel-batch task with empty payload")
        elif self.kind == "fitness-batch":
            if self.pixel is None or not self.genomes:
                raise ValueError("fitness-batch task with empty payload")
        else:
            raise ValueError(f"unknown task kind {self.kind!r}")


@dataclass
class WorkerContext:
    """Everything a worker needs, shipped once at startup."""

    sub_values: object             # ndarray (bands, height, width) of the job region
    nodata: float
    row0: int
    col0: int
    revisit_days: int
    weather: object                # WeatherSeries
    config: object                 # GaConfig with the master seed
    bounds: object                 # GenomeBounds
    template: object               # CropGenome
    fault: FaultSpec = None

    def observed(self, row: int, col: int) -> ObservableSeries:
        values = self.sub_values[:, row - self.row0, col - self.col0]
        return ObservableSeries(self.revisit_days, tuple(float(v) for v in values))


def execute_task(task: Task, ctx: WorkerContext, worker_id: int, state: dict) -> dict:
    """Run one task; used identically by every transport."""
    if (ctx.fault is not None
            and ctx.fault.worker_id in (None, worker_id)
            and state.get("faults_remaining", 0) > 0):
        state["faults_remaining"] -= 1
        raise RuntimeError(ctx.fault.message)
    if task.kind == "pixel-batch":
        results = []
        for (r, c) in task.pixels:
            obs = ctx.observed(r, c)
            res = assimilate_pixel(obs, ctx.weather, pixel_config(ctx.config, r, c),
                                   ctx.bounds, ctx.template)
            results.append(((r, c), res))
        return {"results": results}
    obs = ctx.observed(*task.pixel)
    rmses = [fitness(g, obs, ctx.weather) for g in task.genomes]
    return {"index0": task.index0, "rmses": rmses}


def _serve(worker_id: int, ctx: WorkerContext, recv_frame, send_frame) -> None:
    """Worker main loop, transport-agnostic."""
    state = {"faults_remaining": ctx.fault.failures if ctx.fault else 0}
    while True:
        frame = recv_frame()
        if frame is None:
            return
        msg = pickle.loads(frame)
        if msg.get("kind") == "shutdown":
            return
        task = msg["task"]
        started = time.perf_counter()
        try:
            payload = execute_task(task, ctx, worker_id, state)
            reply = {"task_id": task.task_id, "ok": True, "payload": payload}
        except Exception as exc:
            reply = {"task_id": task.task_id, "ok": False,
                     "error": f"{type(exc).__name__}: {exc}"}
        reply["busy_s"] = time.perf_counter() - started
        send_frame(pickle.dumps(reply, protocol=pickle.HIGHEST_PROTOCOL))


_SHUTDOWN_FRAME = pickle.dumps({"kind": "shutdown"})


class ThreadPool:
    """Worker threads over in-process queues."""

    name = "thread"

    def __init__(self, n_workers: int, ctx: WorkerContext):
        self.n_workers = n_workers
        self._events = queue.Queue()
        self._inboxes = [queue.Queue() for _ in range(n_workers)]
        self._threads = []
        for wid in range(n_workers):
            t = threading.Thread(target=self._run_worker, args=(wid, ctx),
                                 name=f"agrimon-worker-{wid}", daemon=True)
            t.start()
            self._threads.append(t)

    def _run_worker(self, wid: int, ctx: WorkerContext):
        inbox = self._inboxes[wid]
        _serve(wid, ctx, inbox.get,
               lambda frame, wid=wid: self._events.put(("reply", wid, frame)))

    def send(self, worker_id: int, frame: bytes) -> None:
        self._inboxes[worker_id].put(frame)

    def events(self) -> queue.Queue:
        return self._events

    def shutdown(self) -> None:
        for inbox in self._inboxes:
            inbox.put(_SHUTDOWN_FRAME)
        for t in self._threads:
            t.join(timeout=10)


def _read_exact(conn: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = conn.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("socket closed")
        buf += chunk
    return buf


def _read_frame(conn: socket.socket) -> bytes:
    (length,) = _LEN.unpack(_read_exact(conn, _LEN.size))
    return _read_exact(conn, length)


def _write_frame(conn: socket.socket, frame: bytes) -> None:
    conn.sendall(_LEN.pack(len(frame)) + frame)


def _socket_worker_main(address, worker_id: int, ctx: WorkerContext) -> None:
    deadline = time.monotonic() + _HELLO_TIMEOUT_S
    conn = None
    while conn is None:
        try:
            conn = socket.create_connection(address, timeout=5)
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.05)
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    _write_frame(conn, pickle.dumps({"hello": worker_id}))
    try:
        _serve(worker_id, ctx,
               lambda: _read_frame(conn),
               lambda frame: _write_frame(conn, frame))
    except ConnectionError:
        pass
    finally:
        conn.close()


class ProcessPool:
    """Worker processes over localhost sockets (fork where available)."""

    name = "process"

    def __init__(self, n_workers: int, ctx: WorkerContext):
        self.n_workers = n_workers
        self._events = queue.Queue()
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.bind(("127.0.0.1", 0))
        self._listener.listen(n_workers)
        self._listener.settimeout(_HELLO_TIMEOUT_S)
        address = self._listener.getsockname()

        try:
            mp = multiprocessing.get_context("fork")
        except ValueError:
            mp = multiprocessing.get_context()
        self._procs = []
        for wid in range(n_workers):
            p = mp.Process(target=_socket_worker_main, args=(address, wid, ctx),
                           daemon=True)
            p.start()
            self._procs.append(p)
        self.pids = [p.pid for p in self._procs]

        self._conns = {}
        self._send_locks = {}
        for _ in range(n_workers):
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                self.shutdown()
                raise TransportError("worker processes failed to connect")
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            hello = pickle.loads(_read_frame(conn))
            wid = hello["hello"]
            self._conns[wid] = conn
            self._send_locks[wid] = threading.Lock()
            reader = threading.Thread(target=self._read_loop, args=(wid, conn),
                                      daemon=True)
            reader.start()

    def _read_loop(self, wid: int, conn: socket.socket) -> None:
        try:
            while True:
                frame = _read_frame(conn)
                self._events.put(("reply", wid, frame))
        except (ConnectionError, OSError):
            self._events.put(("dead", wid, None))

    def send(self, worker_id: int, frame: bytes) -> None:
        conn = self._conns[worker_id]
        try:
            with self._send_locks[worker_id]:
                _write_frame(conn, frame)
        except (ConnectionError, OSError):
            self._events.put(("dead", worker_id, None))

    def events(self) -> queue.Queue:
        return self._events

    def shutdown(self) -> None:
        for wid, conn in list(self._conns.items()):
            try:
                with self._send_locks[wid]:
                    _write_frame(conn, _SHUTDOWN_FRAME)
            except OSError:
                pass
        for p in self._procs:
            p.join(timeout=5)
        for p in self._procs:
            if p.is_alive():
                p.terminate()
                p.join(timeout=5)
        for conn in self._conns.values():
            try:
                conn.close()
            except OSError:
                pass
        self._listener.close()


TRANSPORTS = {"thread": ThreadPool, "process": ProcessPool}


def make_pool(transport, n_workers: int, ctx: WorkerContext):
    """Build a pool from a transport name, class, or ready factory."""
    if isinstance(transport, str):
        try:
            cls = TRANSPORTS[transport]
        except KeyError:
            raise TransportError(f"unknown transport {transport!r}") from None
        return cls(n_workers, ctx)
    return transport(n_workers, ctx)
