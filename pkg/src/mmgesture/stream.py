"""Real-time style inference over a frame stream using the threaded pipeline."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import RadarConfig
from .datasets import random_stream_parts
from .dsp import to_rdi
from .models import infer_window
from .nn import Model
from .pipeline import StagePipeline, run_serial
from .segmentation import HysteresisState, hysteresis_filter
from .sim import GestureScript, mixed_script, synthesize_cir


@dataclass
class FrameTask:
    index: int
    scatterers: list
    truth: str | None = None


def simulator_tasks(cfg: RadarConfig, seed: int, duration_s: float) -> list[FrameTask]:
    """A random back-to-back gesture stream lasting ``duration_s`` seconds."""
    n = max(1, int(round(duration_s * cfg.frame_rate_fps)))
    parts = random_stream_parts(np.random.default_rng(seed), n)
    script, labels = mixed_script(parts, cfg, seed)
    return [FrameTask(i, f, lab.value) for i, (f, lab) in enumerate(zip(script.frames, labels))]


def script_tasks(script: GestureScript) -> list[FrameTask]:
    return [FrameTask(i, f, script.label.value) for i, f in enumerate(script.frames)]


def paced(tasks, fps: float):
    """Yield each task no earlier than its frame time, like a live sensor."""
    t0 = time.perf_counter()
    for task in tasks:
        delay = t0 + task.index / fps - time.perf_counter()
        if delay > 0:
            time.sleep(delay)
        yield task


def make_stages(model: Model, cfg: RadarConfig, seed: int, k: int = 3):
    """Fresh (capture, dsp, inference) stage functions; inference keeps window state."""
    L = int(model.meta.get("L", 1))
    window: deque = deque(maxlen=L)
    state = {"hyst": HysteresisState(threshold_k=k)}

    def capture(task: FrameTask):
        rng = np.random.default_rng([seed, task.index])
        cir = synthesize_cir(task.scatterers, cfg, rng, task.index, task.index / cfg.frame_rate_fps)
        return cir, task.truth

    def dsp(item):
        cir, truth = item
        return to_rdi(cir, cfg), truth

    def inference(item):
        rdi, truth = item
        window.append(rdi.values)
        if len(window) < L:
            return None
        raw, conf, infer_ms = infer_window(model, np.stack(window))
        state["hyst"], stable = hysteresis_filter(state["hyst"], raw)
        return {"frame_index": rdi.frame_index, "timestamp_s": rdi.timestamp_s, "raw": raw,
                "label": stable, "confidence": conf, "infer_ms": infer_ms, "truth": truth}

    return [capture, dsp, inference]


@dataclass
class StreamSummary:
    windows: int = 0
    frames: int = 0
    latency_ms: list[float] = field(default_factory=list)
    transitions: list[int] = field(default_factory=list)
    raw_accuracy: float | None = None
    stable_accuracy: float | None = None
    pipelined: dict = field(default_factory=dict)
    serial: dict = field(default_factory=dict)

    @property
    def speedup(self) -> float | None:
        s, p = self.serial.get("items_per_s"), self.pipelined.get("items_per_s")
        return p / s if s and p else None

    def to_dict(self) -> dict:
        lat = np.asarray(self.latency_ms)
        return {
            "frames": self.frames,
            "windows": self.windows,
            "latency_ms": {"mean": float(lat.mean()) if lat.size else None,
                           "p95": float(np.percentile(lat, 95)) if lat.size else None,
                           "max": float(lat.max()) if lat.size else None},
            "label_transitions": self.transitions,
            "raw_accuracy": self.raw_accuracy,
            "stable_accuracy": self.stable_accuracy,
            "pipelined": self.pipelined,
            "serial": self.serial,
            "speedup_vs_serial": self.speedup,
        }


def run_stream(model: Model, cfg: RadarConfig, tasks: list[FrameTask], seed: int = 0, k: int = 3,
               queue_capacity: int = 4, realtime: bool = False, on_event=None,
               serial_baseline: bool = True) -> tuple[list[dict], StreamSummary]:
    """Run the three-stage pipeline over ``tasks`` and collect per-window events.

    Each event carries ``e2e_ms``: wall time from the start of capturing the
    newest frame in the window to the emitted label.  With ``realtime`` the
    frames are released at the configured frame rate.
    """
    names = ["capture", "dsp", "inference"]

    def source():
        return paced(tasks, cfg.frame_rate_fps) if realtime else iter(tasks)

    pipe = StagePipeline(make_stages(model, cfg, seed, k), queue_capacity, names)
    events, summary = [], StreamSummary()
    for out in pipe.stream(source()):
        summary.frames += 1
        if out is None:
            continue
        out["e2e_ms"] = pipe.stats.end_to_end_s[-1] * 1e3
        events.append(out)
        summary.latency_ms.append(out["e2e_ms"])
        if on_event:
            on_event(out)
    summary.windows = len(events)
    summary.pipelined = pipe.stats.to_dict()
    summary.transitions = [i for i in range(1, len(events)) if events[i]["label"] != events[i - 1]["label"]]
    truth = [e["truth"] for e in events]
    if events and all(t is not None for t in truth):
        summary.raw_accuracy = float(np.mean([e["raw"] == e["truth"] for e in events]))
        summary.stable_accuracy = float(np.mean([e["label"] == e["truth"] for e in events]))
    if serial_baseline:
        _, serial = run_serial(source(), make_stages(model, cfg, seed, k), names)
        summary.serial = serial.to_dict()
    return events, summary
