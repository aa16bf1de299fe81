"""Three-stage (capture / DSP / inference) threaded pipeline with bounded queues."""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

_END = object()
_POLL_S = 0.02


class PipelineError(RuntimeError):
    def __init__(self, stage: str, index: int, cause: BaseException):
        super().__init__(f"stage {stage!r} failed on item {index}: {cause!r}")
        self.stage = stage
        self.index = index
        self.__cause__ = cause


@dataclass
class _Envelope:
    index: int
    t_start: float
    payload: object


@dataclass
class _Failure:
    stage: str
    index: int
    exc: BaseException


def _summary(samples: Sequence[float]) -> dict:
    if not samples:
        return {"count": 0, "mean_ms": None, "p95_ms": None}
    arr = np.asarray(samples) * 1e3
    return {"count": len(arr), "mean_ms": float(arr.mean()), "p95_ms": float(np.percentile(arr, 95))}


@dataclass
class PipelineStats:
    stage_names: list[str]
    stage_latency_s: list[list[float]]
    end_to_end_s: list[float] = field(default_factory=list)
    items: int = 0
    elapsed_s: float = 0.0
    mode: str = "pipelined"

    @property
    def items_per_s(self) -> float:
        return self.items / self.elapsed_s if self.elapsed_s > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "items": self.items,
            "elapsed_s": self.elapsed_s,
            "items_per_s": self.items_per_s,
            "stages": {name: _summary(lat) for name, lat in zip(self.stage_names, self.stage_latency_s)},
            "end_to_end": _summary(self.end_to_end_s),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class StagePipeline:
    """Run stage functions concurrently, one worker thread per stage.

    The first stage pulls items from the source; each later stage reads the
    previous stage's bounded FIFO queue, so output order equals input order
    and a full queue blocks its producer.  If a stage raises, the remaining
    workers are stopped and the error is re-raised from :meth:`stream`.
    """

    def __init__(self, stage_fns: Sequence[Callable], queue_capacity: int = 4,
                 names: Sequence[str] | None = None):
        if queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if not stage_fns:
            raise ValueError("need at least one stage")
        self.stage_fns = list(stage_fns)
        self.queue_capacity = queue_capacity
        self.names = list(names) if names else [f"stage{i}" for i in range(len(stage_fns))]
        self.stats: PipelineStats | None = None

    def _put(self, q: queue.Queue, item, stop: threading.Event) -> bool:
        while not stop.is_set():
            try:
                q.put(item, timeout=_POLL_S)
                return True
            except queue.Full:
                continue
        return False

    def _get(self, q: queue.Queue, stop: threading.Event):
        while not stop.is_set():
            try:
                return q.get(timeout=_POLL_S)
            except queue.Empty:
                continue
        return _END

    def _source_worker(self, source, out_q, stop, latencies):
        fn, name = self.stage_fns[0], self.names[0]
        index = -1
        try:
            for index, item in enumerate(source):
                if stop.is_set():
                    return
                t0 = time.perf_counter()
                result = fn(item)
                latencies.append(time.perf_counter() - t0)
                if not self._put(out_q, _Envelope(index, t0, result), stop):
                    return
        except BaseException as exc:  # forwarded to the consumer
            self._put(out_q, _Failure(name, index + 1, exc), stop)
            return
        self._put(out_q, _END, stop)

    def _stage_worker(self, k, in_q, out_q, stop, latencies):
        fn, name = self.stage_fns[k], self.names[k]
        while True:
            env = self._get(in_q, stop)
            if env is _END or isinstance(env, _Failure):
                self._put(out_q, env, stop)
                return
            t0 = time.perf_counter()
            try:
                result = fn(env.payload)
            except BaseException as exc:
                self._put(out_q, _Failure(name, env.index, exc), stop)
                return
            latencies.append(time.perf_counter() - t0)
            env.payload = result
            if not self._put(out_q, env, stop):
                return

    def stream(self, source: Iterable) -> Iterator:
        n = len(self.stage_fns)
        queues = [queue.Queue(maxsize=self.queue_capacity) for _ in range(n)]
        latencies: list[list[float]] = [[] for _ in range(n)]
        stop = threading.Event()
        stats = PipelineStats(self.names, latencies)
        self.stats = stats
        threads = [threading.Thread(target=self._source_worker,
                                    args=(iter(source), queues[0], stop, latencies[0]),
                                    name=self.names[0], daemon=True)]
        for k in range(1, n):
            threads.append(threading.Thread(target=self._stage_worker,
                                            args=(k, queues[k - 1], queues[k], stop, latencies[k]),
                                            name=self.names[k], daemon=True))
        t_begin = time.perf_counter()
        for t in threads:
            t.start()
        try:
            while True:
                env = queues[-1].get()
                if env is _END:
                    break
                if isinstance(env, _Failure):
                    log.error("pipeline stage %s failed on item %d", env.stage, env.index)
                    raise PipelineError(env.stage, env.index, env.exc)
                now = time.perf_counter()
                stats.end_to_end_s.append(now - env.t_start)
                stats.items += 1
                stats.elapsed_s = now - t_begin
                yield env.payload
        finally:
            stop.set()
            for t in threads:
                t.join(timeout=5.0)


def run_pipeline(source: Iterable, stage_fns: Sequence[Callable], queue_capacity: int = 4,
                 names: Sequence[str] | None = None) -> tuple[list, PipelineStats]:
    pipe = StagePipeline(stage_fns, queue_capacity, names)
    outputs = list(pipe.stream(source))
    return outputs, pipe.stats


def run_serial(source: Iterable, stage_fns: Sequence[Callable],
               names: Sequence[str] | None = None) -> tuple[list, PipelineStats]:
    """Reference execution: every item passes all stages before the next starts."""
    names = list(names) if names else [f"stage{i}" for i in range(len(stage_fns))]
    stats = PipelineStats(names, [[] for _ in stage_fns], mode="serial")
    outputs = []
    t_begin = time.perf_counter()
    for item in source:
        t_item = time.perf_counter()
        for k, fn in enumerate(stage_fns):
            t0 = time.perf_counter()
            item = fn(item)
            stats.stage_latency_s[k].append(time.perf_counter() - t0)
        now = time.perf_counter()
        stats.end_to_end_s.append(now - t_item)
        outputs.append(item)
        stats.items += 1
        stats.elapsed_s = now - t_begin
    return outputs, stats


def sleeping_stage(cost_s: float, jitter_s: float = 0.0, seed: int = 0) -> Callable:
    """Identity stage that blocks for ``cost_s`` (plus uniform jitter) per item."""
    rng = np.random.default_rng(seed)
    lock = threading.Lock()

    def stage(item):
        with lock:
            extra = rng.uniform(0.0, jitter_s) if jitter_s else 0.0
        time.sleep(cost_s + extra)
        return item

    return stage


def bench_pipeline(costs_s: Sequence[float] = (0.04, 0.08, 0.03), n_items: int = 30,
                   queue_capacity: int = 4) -> dict:
    """Serial vs pipelined throughput with simulated stage costs."""
    names = ["capture", "dsp", "inference"][: len(costs_s)]
    if len(names) < len(costs_s):
        names += [f"stage{i}" for i in range(len(names), len(costs_s))]
    stages = [sleeping_stage(c) for c in costs_s]
    out_s, serial = run_serial(range(n_items), stages, names)
    out_p, piped = run_pipeline(range(n_items), stages, queue_capacity, names)
    if out_s != out_p:
        raise AssertionError("pipelined output differs from serial output")
    return {
        "stage_costs_ms": [c * 1e3 for c in costs_s],
        "queue_capacity": queue_capacity,
        "serial": serial.to_dict(),
        "pipelined": piped.to_dict(),
        "speedup": piped.items_per_s / serial.items_per_s,
        "ideal_speedup": sum(costs_s) / max(costs_s),
    }
