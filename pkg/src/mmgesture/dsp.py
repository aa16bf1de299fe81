"""CIR frames to range-Doppler images."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import RadarConfig

DB_EPS = 1e-12


@dataclass
class CirFrame:
    """Baseband channel impulse responses for one frame.

    ``samples`` is (pulses_per_frame, num_fast_time_taps): slow time down
    the rows, fast-time delay taps across the columns.
    """

    samples: np.ndarray
    cfg: RadarConfig = field(default_factory=RadarConfig)
    frame_index: int = 0
    timestamp_s: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 2 or self.samples.shape[0] != self.cfg.pulses_per_frame:
            raise ValueError(
                f"CIR must have {self.cfg.pulses_per_frame} slow-time rows, "
                f"got shape {self.samples.shape}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("CIR contains non-finite samples")


@dataclass
class Rdi:
    values: np.ndarray
    frame_index: int = 0
    timestamp_s: float = 0.0
    label: str | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def doppler_window(n: int) -> np.ndarray:
    # periodic Hann so the window sums to exactly n/2
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def doppler_spectrum(samples: np.ndarray, window: bool = True) -> np.ndarray:
    """Slow-time FFT per tap, zero Doppler shifted to index n // 2."""
    n = samples.shape[0]
    x = samples * doppler_window(n)[:, None] if window else samples
    return np.fft.fftshift(np.fft.fft(x, axis=0), axes=0)


def to_rdi(cir: CirFrame, cfg: RadarConfig | None = None, *, window: bool = True,
           scale: str = "db", label: str | None = None) -> Rdi:
    """Range-Doppler image of one CIR frame.

    Rows are range taps, columns Doppler bins with zero speed in the middle
    column and closing targets to its right.  ``scale`` is ``"db"`` or
    ``"linear"``.
    """
    cfg = cfg or cir.cfg
    p, taps = cir.samples.shape
    if p != cfg.pulses_per_frame or taps < cfg.num_range_bins:
        raise ValueError(
            f"CIR shape {cir.samples.shape} incompatible with config "
            f"({cfg.pulses_per_frame} pulses, {cfg.num_range_bins} range bins)"
        )
    spec = doppler_spectrum(cir.samples[:, : cfg.num_range_bins], window=window)
    # fftshift puts zero Doppler at p // 2; crop so it lands on the center column
    start = p // 2 - cfg.center_doppler_bin
    mag = np.abs(spec[start : start + cfg.num_doppler_bins, :]).T
    if scale == "db":
        values = 20.0 * np.log10(mag + DB_EPS)
    elif scale == "linear":
        values = mag
    else:
        raise ValueError(f"unknown scale {scale!r}")
    return Rdi(values, frame_index=cir.frame_index, timestamp_s=cir.timestamp_s, label=label)


def spectrum_energy(cir: CirFrame | np.ndarray) -> float:
    """Total energy of the unwindowed slow-time spectrum."""
    samples = cir.samples if isinstance(cir, CirFrame) else np.asarray(cir)
    spec = np.fft.fft(samples, axis=0)
    return float(np.sum(np.abs(spec) ** 2))


def parseval_check(cir: CirFrame | np.ndarray, rtol: float = 1e-9) -> bool:
    samples = cir.samples if isinstance(cir, CirFrame) else np.asarray(cir)
    n = samples.shape[0]
    time_energy = np.sum(np.abs(samples) ** 2, axis=0)
    freq_energy = np.sum(np.abs(np.fft.fft(samples, axis=0)) ** 2, axis=0)
    return bool(np.allclose(freq_energy, n * time_energy, rtol=rtol, atol=0.0))
