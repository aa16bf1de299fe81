"""Noise-vs-motion segmentation of RDI sequences and hysteresis label smoothing."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .models import (
    GestureDataset,
    TrainConfig,
    TrainReport,
    build_noise_detector,
    predict_proba,
    stratified_split,
    train,
)
from .nn import Model
from .restore import RdiSequence

MOTION = "Motion"
NOISE = "Noise"


@dataclass(frozen=True)
class Segment:
    start_index: int
    end_index: int
    kind: str

    def __post_init__(self):
        if self.start_index > self.end_index:
            raise ValueError("segment start after end")
        if self.kind not in (MOTION, NOISE):
            raise ValueError(f"unknown segment kind {self.kind!r}")

    def __len__(self):
        return self.end_index - self.start_index + 1

    def to_dict(self) -> dict:
        return {"start": int(self.start_index), "end": int(self.end_index), "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        return cls(int(d["start"]), int(d["end"]), d["kind"])


SEGMENTS_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "start": {"type": "integer", "minimum": 0},
            "end": {"type": "integer", "minimum": 0},
            "kind": {"enum": [MOTION, NOISE]},
        },
        "required": ["start", "end", "kind"],
        "additionalProperties": False,
    },
}


def segments_to_json(segments: list[Segment]) -> str:
    return json.dumps([s.to_dict() for s in segments])


def _stack_windows(frames: np.ndarray, window: int) -> np.ndarray:
    """(N, rows, cols) -> (N, window, rows, cols), centred, edges clamped."""
    n = len(frames)
    offsets = np.arange(window) - window // 2
    idx = np.clip(np.arange(n)[:, None] + offsets[None, :], 0, n - 1)
    return frames[idx]


def detector_input(model: Model, frames: np.ndarray) -> np.ndarray:
    window = int(model.meta.get("L", 1))
    stacked = _stack_windows(np.asarray(frames), window)
    n, w, rows, cols = stacked.shape
    return stacked.reshape(n, w * rows, cols, 1)


def train_noise_detector(frames: np.ndarray, is_noise: np.ndarray, seed: int = 0,
                         hyper: TrainConfig | None = None, window: int = 1,
                         val_fraction: float = 0.2) -> tuple[Model, TrainReport]:
    """Fit the binary noise/motion model on labelled single RDIs.

    ``frames`` is (N, rows, cols); ``is_noise`` marks the noise frames.  The
    returned report carries held-out accuracy in ``val_accuracy``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    y = np.asarray(is_noise, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise ValueError("noise detector needs both noise and motion examples")
    hyper = hyper or TrainConfig(epochs=8, seed=seed)
    model = build_noise_detector(seed=seed, window=window, dtype=np.float32,
                                 frame_shape=frames.shape[1:])
    windows = _stack_windows(frames, window) if window > 1 else frames[:, None]
    train_idx, val_idx = stratified_split(y, val_fraction, seed)
    dataset = GestureDataset(windows, y, train_idx, val_idx, seed, ["Motion", "Noise"])
    report = train(model, dataset, hyper)
    return model, report


def noise_scores(seq: RdiSequence | np.ndarray, detector: Model) -> np.ndarray:
    """Probability of noise for every received frame."""
    frames = seq.values() if isinstance(seq, RdiSequence) else np.asarray(seq)
    if len(frames) == 0:
        return np.zeros(0)
    probs = predict_proba(detector, detector_input(detector, frames))
    return probs[:, 1].astype(np.float64)


def _runs(flags: np.ndarray) -> list[tuple[int, int, bool]]:
    """Maximal runs as (start, end_inclusive, value)."""
    if len(flags) == 0:
        return []
    change = np.flatnonzero(np.diff(flags.astype(np.int8))) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change - 1, [len(flags) - 1]])
    return [(int(s), int(e), bool(flags[s])) for s, e in zip(starts, ends)]


def clean_motion_mask(motion: np.ndarray, min_motion_len: int) -> np.ndarray:
    """Fill interior noise gaps shorter than ``min_motion_len``, then drop short motion runs."""
    m = np.asarray(motion, dtype=bool).copy()
    runs = _runs(m)
    for k, (s, e, val) in enumerate(runs):
        interior = 0 < k < len(runs) - 1
        if not val and interior and e - s + 1 < min_motion_len:
            m[s:e + 1] = True
    for s, e, val in _runs(m):
        if val and e - s + 1 < min_motion_len:
            m[s:e + 1] = False
    return m


def segments_from_mask(motion: np.ndarray, nominal_indices=None, nominal_length=None) -> list[Segment]:
    """Alternating segments; dropped nominal frames join the preceding segment."""
    motion = np.asarray(motion, dtype=bool)
    idx = np.arange(len(motion)) if nominal_indices is None else np.asarray(nominal_indices)
    last = int(idx[-1] + 1 if len(idx) else 0) if nominal_length is None else int(nominal_length)
    runs = _runs(motion)
    segments = []
    for k, (s, e, val) in enumerate(runs):
        start = 0 if k == 0 else int(idx[s])
        end = int(idx[runs[k + 1][0]]) - 1 if k + 1 < len(runs) else last - 1
        segments.append(Segment(start, end, MOTION if val else NOISE))
    return segments


def segment(seq: RdiSequence, detector: Model, min_motion_len: int = 3,
            threshold: float = 0.5) -> list[Segment]:
    """Split a sequence into alternating Motion / Noise segments."""
    if min_motion_len < 1:
        raise ValueError("min_motion_len must be >= 1")
    if not len(seq):
        return []
    motion = noise_scores(seq, detector) < threshold
    motion = clean_motion_mask(motion, min_motion_len)
    return segments_from_mask(motion, seq.nominal_indices, seq.nominal_length)


def motion_frames(seq: RdiSequence, segments: list[Segment]) -> RdiSequence:
    """Keep only frames that fall inside Motion segments."""
    keep = np.zeros(seq.nominal_length, bool)
    for s in segments:
        if s.kind == MOTION:
            keep[s.start_index:s.end_index + 1] = True
    frames = [f for f, i in zip(seq.frames, seq.nominal_indices) if keep[i]]
    return RdiSequence(frames, label=seq.label)


# -- hysteresis ---------------------------------------------------------------


@dataclass(frozen=True)
class HysteresisState:
    threshold_k: int = 3
    current_label: str | None = None
    candidate_label: str | None = None
    streak_count: int = 0

    def __post_init__(self):
        if self.threshold_k < 1:
            raise ValueError("threshold_k must be >= 1")


def hysteresis_filter(state: HysteresisState, new_label) -> tuple[HysteresisState, str]:
    """Switch the emitted label only after ``threshold_k`` consecutive new predictions.

    The first prediction ever seen is adopted immediately.
    """
    if state.current_label is None or new_label == state.current_label:
        state = replace(state, current_label=new_label, candidate_label=None, streak_count=0)
        return state, new_label
    streak = state.streak_count + 1 if new_label == state.candidate_label else 1
    if streak >= state.threshold_k:
        state = replace(state, current_label=new_label, candidate_label=None, streak_count=0)
    else:
        state = replace(state, candidate_label=new_label, streak_count=streak)
    return state, state.current_label


def smooth_labels(labels, k: int) -> list:
    state = HysteresisState(threshold_k=k)
    out = []
    for lab in labels:
        state, emitted = hysteresis_filter(state, lab)
        out.append(emitted)
    return out
