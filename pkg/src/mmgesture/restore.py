"""Frame-drop modelling and band-limited restoration of RDI sequences."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import Rdi


@dataclass
class RdiSequence:
    """Received frames of a nominally uniform RDI stream.

    ``drop_mask[i]`` is True when nominal frame ``i`` never arrived;
    ``frames`` holds only the frames that did, in order.
    """

    frames: list[Rdi]
    drop_mask: np.ndarray | None = None
    label: str | None = None

    def __post_init__(self):
        if self.drop_mask is None:
            self.drop_mask = np.zeros(len(self.frames), dtype=bool)
        self.drop_mask = np.asarray(self.drop_mask, dtype=bool)
        if self.drop_mask.ndim != 1 or int((~self.drop_mask).sum()) != len(self.frames):
            raise ValueError(
                f"{len(self.frames)} frames do not match {int((~self.drop_mask).sum())} "
                "received slots in drop_mask"
            )
        shapes = {f.values.shape for f in self.frames}
        if len(shapes) > 1:
            raise ValueError(f"mixed frame shapes {shapes}")

    @classmethod
    def from_array(cls, values: np.ndarray, label: str | None = None,
                   drop_mask: np.ndarray | None = None, fps: float = 8.0) -> "RdiSequence":
        values = np.asarray(values, dtype=np.float64)
        mask = np.zeros(len(values), bool) if drop_mask is None else np.asarray(drop_mask, bool)
        idx = np.flatnonzero(~mask)
        frames = [Rdi(v, int(i), i / fps, label) for v, i in zip(values, idx)]
        return cls(frames, mask, label)

    @property
    def nominal_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.drop_mask)

    @property
    def nominal_length(self) -> int:
        return len(self.drop_mask)

    @property
    def num_dropped(self) -> int:
        return int(self.drop_mask.sum())

    def values(self) -> np.ndarray:
        """Received frames stacked as (n_received, rows, cols)."""
        if not self.frames:
            return np.zeros((0, 0, 0))
        return np.stack([f.values for f in self.frames])

    def __len__(self):
        return len(self.frames)


@dataclass
class FeatureSequence:
    vectors: np.ndarray
    frame_shape: tuple[int, ...] = field(default=())

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors)
        if self.vectors.ndim != 2:
            raise ValueError("feature vectors must form a 2-D (count, dim) array")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]


def inject_drops(seq: RdiSequence, drop_prob: float, seed: int,
                 burst_len: float = 1.0) -> RdiSequence:
    """Randomly drop frames from a complete sequence.

    With ``burst_len == 1`` every frame is dropped independently with
    probability ``drop_prob``.  Larger ``burst_len`` switches to a two-state
    chain whose drop runs have geometric length with that mean, keeping the
    long-run drop rate at ``drop_prob``.
    """
    if not 0.0 <= drop_prob < 1.0:
        raise ValueError("drop_prob must lie in [0, 1)")
    if seq.num_dropped:
        raise ValueError("sequence already has dropped frames")
    if burst_len < 1.0:
        raise ValueError("burst_len must be >= 1")
    rng = np.random.default_rng(seed)
    n = len(seq.frames)
    if burst_len == 1.0:
        mask = rng.random(n) < drop_prob
    else:
        enter = min(1.0, drop_prob / (burst_len * (1.0 - drop_prob)))
        leave = 1.0 / burst_len
        u = rng.random(n)
        mask = np.zeros(n, bool)
        dropping = rng.random() < drop_prob
        for i in range(n):
            mask[i] = dropping
            dropping = u[i] >= leave if dropping else u[i] < enter
    kept = [f for f, gone in zip(seq.frames, mask) if not gone]
    return RdiSequence(kept, mask, seq.label)


def encode(seq: RdiSequence) -> FeatureSequence:
    """Flatten every received frame into one feature vector."""
    if not seq.frames:
        return FeatureSequence(np.zeros((0, 0)), ())
    shape = seq.frames[0].values.shape
    return FeatureSequence(seq.values().reshape(len(seq.frames), -1), shape)


def decode(features: FeatureSequence, frame_shape: tuple[int, ...] | None = None,
           label: str | None = None, fps: float = 8.0) -> RdiSequence:
    shape = tuple(frame_shape or features.frame_shape)
    if not shape or int(np.prod(shape)) != features.dim:
        raise ValueError(f"cannot reshape {features.dim}-dim features to frame shape {shape}")
    values = features.vectors.reshape((len(features),) + shape)
    return RdiSequence.from_array(values, label=label, fps=fps)


def fourier_resample(x: np.ndarray, target_len: int) -> np.ndarray:
    """Band-limited resampling of ``x`` along axis 0 by spectral zero padding."""
    x = np.asarray(x)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot resample an empty sequence")
    if target_len < n:
        raise ValueError(f"target_len {target_len} shorter than input length {n}")
    if target_len == n:
        return x.copy()
    spec = np.fft.fft(x, axis=0)
    out = np.zeros((target_len,) + x.shape[1:], dtype=np.complex128)
    half = (n + 1) // 2  # DC plus strictly positive bins
    out[:half] = spec[:half]
    if n % 2 == 0:
        nyq = spec[n // 2] / 2.0
        out[n // 2] += nyq
        out[target_len - n // 2] += nyq
        neg = n // 2 - 1
    else:
        neg = n // 2
    if neg:
        out[target_len - neg:] = spec[n - neg:]
    y = np.fft.ifft(out, axis=0) * (target_len / n)
    return y.real if np.isrealobj(x) else y


def restore(features: FeatureSequence, received_times, target_len: int) -> FeatureSequence:
    """Stretch the received feature stream to ``target_len`` uniform samples.

    The received frames are treated as uniformly spaced in arrival order
    and each feature dimension is resampled independently.
    """
    times = np.asarray(received_times)
    if times.shape != (len(features),):
        raise ValueError("need one received time per feature vector")
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("received_times must be strictly increasing")
    if target_len < len(features):
        raise ValueError(f"target_len {target_len} < number of received frames {len(features)}")
    return FeatureSequence(fourier_resample(features.vectors, target_len), features.frame_shape)


def restore_sequence(seq: RdiSequence, target_len: int | None = None, fps: float = 8.0) -> RdiSequence:
    """Encode, restore to the nominal length (or ``target_len``) and decode."""
    target = seq.nominal_length if target_len is None else target_len
    feats = restore(encode(seq), seq.nominal_indices, target)
    return decode(feats, label=seq.label, fps=fps)


def augment(seq: RdiSequence, factor: int, max_stretch: float = 1.5) -> list[RdiSequence]:
    """Time-stretched copies of ``seq``, each cropped back to its nominal length.

    Variant ``i`` is restored to ``n * s_i`` frames with ``s_i`` evenly spaced
    in ``[1, max_stretch]`` and then centre-cropped to ``n`` frames.  The first
    variant is the sequence itself (restored if it had drops).
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return [seq]
    n = seq.nominal_length
    feats = encode(seq)
    out = []
    for s in np.linspace(1.0, max_stretch, factor):
        m = max(len(feats), int(round(n * s)))
        stretched = restore(feats, seq.nominal_indices, m).vectors
        start = (m - n) // 2
        out.append(decode(FeatureSequence(stretched[start:start + n], feats.frame_shape),
                          label=seq.label))
    return out
