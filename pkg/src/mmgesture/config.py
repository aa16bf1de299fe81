"""Radar constants and bin/axis arithmetic.

Everything that maps physical quantities (range, radial speed) onto the
rows and columns of a range-Doppler image goes through :class:`RadarConfig`.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

LIGHT_SPEED = 2.99792458e8


class OutOfAxis(ValueError):
    """A range or speed that does not fall on the RDI grid."""


@dataclass(frozen=True)
class RadarConfig:
    carrier_hz: float = 60e9
    bandwidth_hz: float = 3.52e9
    light_speed_mps: float = LIGHT_SPEED
    pulses_per_frame: int = 64
    pulse_repetition_hz: float = 1024.0
    frame_rate_fps: float = 8.0
    num_range_bins: int = 9
    num_doppler_bins: int = 49
    num_fast_time_taps: int = 16
    noise_floor_snr_db: float = 20.0
    noise_floor_power: float = 1e-4

    def __post_init__(self):
        if not self.carrier_hz > 0:
            raise ValueError("carrier_hz must be positive")
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth_hz must be positive")
        if not self.pulse_repetition_hz > 0 or not self.frame_rate_fps > 0:
            raise ValueError("pulse_repetition_hz and frame_rate_fps must be positive")
        if self.num_range_bins < 1 or self.num_doppler_bins < 1:
            raise ValueError("RDI grid must be at least 1x1")
        if self.pulses_per_frame < self.num_doppler_bins:
            raise ValueError("pulses_per_frame must be >= num_doppler_bins")
        if self.num_fast_time_taps < self.num_range_bins:
            raise ValueError("num_fast_time_taps must be >= num_range_bins")
        if self.noise_floor_power < 0:
            raise ValueError("noise_floor_power must be >= 0")

    @property
    def wavelength_m(self) -> float:
        return self.light_speed_mps / self.carrier_hz

    @property
    def max_unambiguous_speed(self) -> float:
        return self.wavelength_m * self.pulse_repetition_hz / 4.0

    @property
    def doppler_bin_hz(self) -> float:
        return self.pulse_repetition_hz / self.pulses_per_frame

    @property
    def speed_resolution(self) -> float:
        return self.doppler_bin_hz * self.wavelength_m / 2.0

    @property
    def frame_duration_s(self) -> float:
        """Slow-time span covered by one CIR frame."""
        return self.pulses_per_frame / self.pulse_repetition_hz

    @property
    def center_doppler_bin(self) -> int:
        return (self.num_doppler_bins - 1) // 2

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RadarConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown radar config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "RadarConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def range_resolution(cfg: RadarConfig) -> float:
    """Physical range resolution c / (2B) in meters."""
    return cfg.light_speed_mps / (2.0 * cfg.bandwidth_hz)


def doppler_shift(velocity_mps, cfg: RadarConfig):
    """Doppler shift in Hz; positive for a closing target (velocity < 0)."""
    return -2.0 * velocity_mps / cfg.wavelength_m


def max_range(cfg: RadarConfig) -> float:
    return cfg.num_range_bins * range_resolution(cfg)


def range_bin(range_m: float, cfg: RadarConfig) -> int:
    if not 0.0 <= range_m < max_range(cfg):
        raise OutOfAxis(f"range {range_m!r} m outside [0, {max_range(cfg):.4f})")
    return int(math.floor(range_m / range_resolution(cfg)))


def velocity_bin(velocity_mps: float, cfg: RadarConfig) -> int:
    """Column of the cropped RDI holding radial speed ``velocity_mps``.

    Columns are centered: the middle column is zero Doppler and closing
    targets land to the right of it.
    """
    if abs(velocity_mps) > cfg.max_unambiguous_speed:
        raise OutOfAxis(
            f"|v|={abs(velocity_mps):.4f} m/s exceeds unambiguous speed "
            f"{cfg.max_unambiguous_speed:.4f} m/s"
        )
    offset = int(math.floor(doppler_shift(velocity_mps, cfg) / cfg.doppler_bin_hz + 0.5))
    col = cfg.center_doppler_bin + offset
    if not 0 <= col < cfg.num_doppler_bins:
        raise OutOfAxis(f"velocity {velocity_mps!r} m/s falls outside the Doppler crop")
    return col
