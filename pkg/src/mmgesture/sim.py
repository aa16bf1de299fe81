"""Point-scatterer gesture kinematics and CIR synthesis."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .config import OutOfAxis, RadarConfig, max_range, range_resolution
from .dsp import CirFrame, Rdi, to_rdi


class Gesture(str, enum.Enum):
    SWIPE = "Swipe"
    PALM_HOLD = "PalmHold"
    PULL_PUSH = "PullPush"
    FINGER_SLIDE = "FingerSlide"
    NOISE = "Noise"

    @classmethod
    def parse(cls, value) -> "Gesture":
        if isinstance(value, cls):
            return value
        for g in cls:
            if value in (g.value, g.name, g.value.lower()):
                return g
        raise ValueError(f"unknown gesture label {value!r}")


GESTURES = list(Gesture)
MOTIONS = [g for g in Gesture if g is not Gesture.NOISE]


@dataclass(frozen=True)
class Scatterer:
    range_m: float
    velocity_mps: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.range_m < 0:
            raise ValueError(f"range must be >= 0, got {self.range_m}")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")


@dataclass
class GestureScript:
    label: Gesture
    frames: list[list[Scatterer]]
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.label = Gesture.parse(self.label)
        if not self.frames:
            raise ValueError("a gesture script needs at least one frame")

    def __len__(self):
        return len(self.frames)

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "seed": self.seed,
            "meta": self.meta,
            "frames": [
                [{"range_m": s.range_m, "velocity_mps": s.velocity_mps, "amplitude": s.amplitude}
                 for s in frame]
                for frame in self.frames
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GestureScript":
        frames = [[Scatterer(**s) for s in frame] for frame in data["frames"]]
        return cls(Gesture.parse(data["label"]), frames, int(data.get("seed", 0)), data.get("meta", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GestureScript":
        return cls.from_dict(json.loads(text))


def _triangle(phase):
    """Unit-amplitude triangle wave and its slope sign, period 1."""
    frac = np.mod(phase, 1.0)
    value = np.where(frac < 0.5, 4 * frac - 1, 3 - 4 * frac)
    slope = np.where(frac < 0.5, 1.0, -1.0)
    return value, slope


def _swipe(rng, t, cfg):
    closest = rng.uniform(0.08, 0.16)
    half_sweep = rng.uniform(0.15, 0.25)
    speed = rng.uniform(0.5, 0.8)
    period = 4 * half_sweep / speed
    phase0 = rng.uniform(0, 1)
    parts = [(0.0, rng.uniform(0.7, 1.0))]
    parts += [(rng.uniform(0.02, 0.05), rng.uniform(0.25, 0.45)) for _ in range(2)]
    tri, slope = _triangle(t / period + phase0)
    x_hand = half_sweep * tri
    dx = 4 * half_sweep / period * slope
    tracks = []
    for offset, amp in parts:
        x = x_hand + offset
        r = np.sqrt(closest**2 + x**2)
        tracks.append((r, x * dx / r, amp))
    return tracks


def _palm_hold(rng, t, cfg):
    base = rng.uniform(0.10, 0.28)
    tracks = []
    for k in range(rng.integers(2, 4)):
        r0 = base + k * rng.uniform(0.01, 0.03)
        jitter = rng.uniform(0.003, 0.015)
        omega = 2 * np.pi / rng.uniform(0.5, 2.0)
        phi = rng.uniform(0, 2 * np.pi)
        v = jitter * np.sin(omega * t + phi)
        r = r0 - jitter / omega * np.cos(omega * t + phi)
        amp = rng.uniform(0.6, 1.0) if k == 0 else rng.uniform(0.2, 0.5)
        tracks.append((r, v, amp))
    return tracks


def _pull_push(rng, t, cfg):
    center = rng.uniform(0.16, 0.24)
    depth = rng.uniform(0.06, 0.10)
    omega = 2 * np.pi / rng.uniform(0.9, 1.3)
    phi = rng.uniform(0, 2 * np.pi)
    tracks = []
    for k, amp in enumerate((rng.uniform(0.7, 1.0), rng.uniform(0.2, 0.4))):
        r = center + k * 0.03 + depth * np.sin(omega * t + phi)
        v = depth * omega * np.cos(omega * t + phi)
        tracks.append((r, v, amp))
    return tracks


def _finger_slide(rng, t, cfg):
    base = rng.uniform(0.06, 0.20)
    peak_speed = rng.uniform(0.06, 0.15)
    omega = 2 * np.pi / rng.uniform(0.4, 0.7)
    phi = rng.uniform(0, 2 * np.pi)
    v = peak_speed * np.sin(omega * t + phi)
    r = base - peak_speed / omega * np.cos(omega * t + phi)
    return [(r, v, rng.uniform(0.15, 0.3))]


_TEMPLATES = {
    Gesture.SWIPE: _swipe,
    Gesture.PALM_HOLD: _palm_hold,
    Gesture.PULL_PUSH: _pull_push,
    Gesture.FINGER_SLIDE: _finger_slide,
}


def _noise_frames(rng, n, cfg):
    limit = max_range(cfg) - 1e-6
    vmax = min(0.9, cfg.max_unambiguous_speed)
    frames = []
    for _ in range(n):
        k = int(rng.integers(2, 7))
        frames.append([
            Scatterer(float(rng.uniform(0.0, limit)), float(rng.uniform(-vmax, vmax)),
                      float(rng.uniform(0.005, 0.03)))
            for _ in range(k)
        ])
    return frames


def make_gesture(label, cfg: RadarConfig, seed: int, duration_frames: int) -> GestureScript:
    """Scripted scatterer kinematics for one gesture, sampled at frame centers.

    Motion templates are periodic with a random phase, so any window of the
    script shows the same signature as a fresh script of that length.
    """
    label = Gesture.parse(label)
    if duration_frames < 1:
        raise ValueError("duration_frames must be >= 1")
    rng = np.random.default_rng([seed, GESTURES.index(label)])
    if label is Gesture.NOISE:
        return GestureScript(label, _noise_frames(rng, duration_frames, cfg), seed)

    t = np.arange(duration_frames) / cfg.frame_rate_fps
    tracks = _TEMPLATES[label](rng, t, cfg)
    lo, hi = 0.005, max_range(cfg) - 0.005
    frames = []
    for k in range(duration_frames):
        frames.append([
            Scatterer(float(np.clip(r[k], lo, hi)), float(v[k]), float(amp))
            for r, v, amp in tracks
        ])
    return GestureScript(label, frames, seed)


def _check_axis(scatterers, cfg):
    limit = max_range(cfg)
    for s in scatterers:
        if not 0.0 <= s.range_m < limit:
            raise OutOfAxis(f"scatterer range {s.range_m} m outside [0, {limit:.4f})")
        if abs(s.velocity_mps) > cfg.max_unambiguous_speed:
            raise OutOfAxis(f"scatterer speed {s.velocity_mps} m/s is ambiguous")


def pulse_times(cfg: RadarConfig) -> np.ndarray:
    """Slow-time sample instants relative to the frame center."""
    p = cfg.pulses_per_frame
    return (np.arange(p) - (p - 1) / 2.0) / cfg.pulse_repetition_hz


def noise_power(scatterers, cfg: RadarConfig) -> float:
    if not scatterers:
        return cfg.noise_floor_power
    peak = max(s.amplitude for s in scatterers)
    return max(peak**2 * 10.0 ** (-cfg.noise_floor_snr_db / 10.0), cfg.noise_floor_power)


def synthesize_cir(scatterers, cfg: RadarConfig, rng: np.random.Generator | None = None,
                   frame_index: int = 0, timestamp_s: float = 0.0) -> CirFrame:
    """Baseband CIR of a set of point scatterers; ``rng=None`` means noiseless.

    Each scatterer's range is its value at the frame center; during the
    frame it moves at constant radial speed.  Echoes land on the nearest
    lower fast-time tap and are dropped once they leave the tap span.
    """
    _check_axis(scatterers, cfg)
    p, taps = cfg.pulses_per_frame, cfg.num_fast_time_taps
    samples = np.zeros((p, taps), dtype=np.complex128)
    if scatterers:
        r0 = np.array([s.range_m for s in scatterers])[:, None]
        v0 = np.array([s.velocity_mps for s in scatterers])[:, None]
        amp = np.array([s.amplitude for s in scatterers])[:, None]
        r = r0 + v0 * pulse_times(cfg)[None, :]
        tap = np.floor(r / range_resolution(cfg)).astype(np.int64)
        phasor = amp * np.exp(-2j * np.pi * cfg.carrier_hz * 2.0 * r / cfg.light_speed_mps)
        pulse = np.broadcast_to(np.arange(p), r.shape)
        ok = (r >= 0) & (tap < taps)
        np.add.at(samples, (pulse[ok], tap[ok]), phasor[ok])
    if rng is not None:
        sigma = np.sqrt(noise_power(scatterers, cfg) / 2.0)
        samples += sigma * (rng.standard_normal((p, taps)) + 1j * rng.standard_normal((p, taps)))
    return CirFrame(samples, cfg, frame_index, timestamp_s)


def render_script(script: GestureScript, cfg: RadarConfig, rng: np.random.Generator | None,
                  start_index: int = 0, label: str | None = None) -> list[Rdi]:
    """Synthesize and process every frame of a script into RDIs."""
    label = script.label.value if label is None else label
    out = []
    for k, scatterers in enumerate(script.frames):
        idx = start_index + k
        cir = synthesize_cir(scatterers, cfg, rng, idx, idx / cfg.frame_rate_fps)
        out.append(to_rdi(cir, cfg, label=label))
    return out


def mixed_script(parts, cfg: RadarConfig, seed: int) -> tuple[GestureScript, list[Gesture]]:
    """Concatenate gesture scripts; returns the joined script and per-frame labels.

    ``parts`` is a sequence of ``(label, n_frames)``.  The joined script is
    labelled with its first motion class (Noise if there is none).
    """
    frames, labels = [], []
    for i, (label, n) in enumerate(parts):
        piece = make_gesture(label, cfg, seed * 1000 + i, n)
        frames.extend(piece.frames)
        labels.extend([piece.label] * n)
    main = next((g for g in labels if g is not Gesture.NOISE), Gesture.NOISE)
    meta = {"parts": [[Gesture.parse(lab).value, int(n)] for lab, n in parts]}
    return GestureScript(main, frames, seed, meta), labels
