"""Pulse-Doppler mmWave gesture recognition toolkit."""

from .config import OutOfAxis, RadarConfig, doppler_shift, range_bin, range_resolution, velocity_bin
from .dsp import CirFrame, Rdi, to_rdi
from .restore import RdiSequence, fourier_resample, inject_drops, restore_sequence
from .sim import GESTURES, Gesture, GestureScript, Scatterer, make_gesture, synthesize_cir

__all__ = [
    "CirFrame",
    "GESTURES",
    "Gesture",
    "GestureScript",
    "OutOfAxis",
    "RadarConfig",
    "Rdi",
    "RdiSequence",
    "Scatterer",
    "doppler_shift",
    "fourier_resample",
    "inject_drops",
    "make_gesture",
    "range_bin",
    "range_resolution",
    "restore_sequence",
    "synthesize_cir",
    "to_rdi",
    "velocity_bin",
]
