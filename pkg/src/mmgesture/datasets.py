"""Synthetic RDI sequence generation shared by the CLI, tests and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RadarConfig
from .restore import RdiSequence
from .sim import GESTURES, MOTIONS, Gesture, GestureScript, make_gesture, mixed_script, render_script


@dataclass
class SimulatedSequence:
    script: GestureScript
    sequence: RdiSequence
    frame_labels: list[Gesture] | None = None


def simulate_sequence(label, cfg: RadarConfig, seed: int, frames: int,
                      noisy: bool = True) -> SimulatedSequence:
    script = make_gesture(label, cfg, seed, frames)
    rng = np.random.default_rng([seed, 7919]) if noisy else None
    rdis = render_script(script, cfg, rng)
    return SimulatedSequence(script, RdiSequence(rdis, label=script.label.value))


def simulate_dataset(cfg: RadarConfig, count_per_class: int, frames: int, seed: int,
                     classes=GESTURES) -> list[SimulatedSequence]:
    """``count_per_class`` sequences of ``frames`` RDIs for every class, interleaved by class."""
    classes = [Gesture.parse(c) for c in classes]
    out = []
    for i in range(count_per_class):
        for k, label in enumerate(classes):
            out.append(simulate_sequence(label, cfg, seed * 1_000_003 + i * len(GESTURES) + k, frames))
    return out


def simulate_mixed(parts, cfg: RadarConfig, seed: int) -> SimulatedSequence:
    """A sequence built from ``(label, n_frames)`` parts, with per-frame truth."""
    script, labels = mixed_script(parts, cfg, seed)
    rdis = render_script(script, cfg, np.random.default_rng([seed, 104729]))
    for rdi, lab in zip(rdis, labels):
        rdi.label = lab.value
    return SimulatedSequence(script, RdiSequence(rdis, label=script.label.value), labels)


def random_mixed_parts(rng: np.random.Generator, noise_len=(5, 15), motion_len=(10, 25)):
    """[noise | one motion gesture | noise] with random lengths."""
    motion = MOTIONS[int(rng.integers(len(MOTIONS)))]
    return [
        (Gesture.NOISE, int(rng.integers(noise_len[0], noise_len[1] + 1))),
        (motion, int(rng.integers(motion_len[0], motion_len[1] + 1))),
        (Gesture.NOISE, int(rng.integers(noise_len[0], noise_len[1] + 1))),
    ]


def random_stream_parts(rng: np.random.Generator, total_frames: int, min_len: int = 16,
                        max_len: int = 40):
    """Back-to-back gestures of random classes covering ``total_frames`` frames."""
    parts, used = [], 0
    prev = None
    while used < total_frames:
        choices = [g for g in GESTURES if g is not prev]
        label = choices[int(rng.integers(len(choices)))]
        n = min(int(rng.integers(min_len, max_len + 1)), total_frames - used)
        parts.append((label, n))
        used += n
        prev = label
    return parts
