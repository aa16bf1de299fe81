"""The two gesture classifiers (CNN+LSTM and stacked-frame tiny CNN), training and evaluation."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dsp import Rdi
from .nn import (
    BatchNorm,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    FoldTime,
    LstmCell,
    MaxPool2d,
    Model,
    ReLU,
    Softmax,
    Standardize,
    UnfoldTime,
    backward,
    cross_entropy,
    forward,
    sgd_step,
)
from .restore import RdiSequence, augment
from .sim import GESTURES

log = logging.getLogger(__name__)

CLASS_NAMES = [g.value for g in GESTURES]
FRAME_SHAPE = (9, 49)

# (c1, c2, c3) per stacked length, found by searching bias-free conv widths
# against the parameter budgets ~2.29K (L=5), ~6K (L=7) and ~16K (L=10)
TINY_CNN_WIDTHS = {3: (4, 6, 8), 5: (4, 7, 9), 7: (8, 12, 16), 10: (12, 20, 28)}
CNN_LSTM_WIDTHS = {"c1": 8, "c2": 16, "feature": 16, "hidden": 24}


class TrainingError(RuntimeError):
    pass


def _frame_shape(cfg) -> tuple[int, int]:
    if cfg is None:
        return FRAME_SHAPE
    return (cfg.num_range_bins, cfg.num_doppler_bins)


def tiny_cnn_widths(L: int) -> tuple[int, int, int]:
    if L in TINY_CNN_WIDTHS:
        return TINY_CNN_WIDTHS[L]
    nearest = min(TINY_CNN_WIDTHS, key=lambda k: (abs(k - L), k))
    return TINY_CNN_WIDTHS[nearest]


def build_tiny_cnn(L: int, cfg=None, seed: int = 0, widths=None, n_classes: int = 5,
                   dtype=np.float64) -> Model:
    """Pure CNN over ``L`` frames stacked along the range axis."""
    rows, cols = _frame_shape(cfg)
    height = rows * L
    if height < 8:
        raise ValueError(f"stacked height {height} collapses under three 2x2 poolings")
    c1, c2, c3 = widths or tiny_cnn_widths(L)
    rng = np.random.default_rng(seed)
    layers = [Standardize()]
    cin = 1
    for cout in (c1, c2, c3):
        layers += [Conv2d(cin, cout, rng=rng, bias=False), BatchNorm(cout), ReLU(), MaxPool2d()]
        cin = cout
    flat = (height // 8) * (cols // 8) * c3
    layers += [Flatten(), Dense(flat, n_classes, rng), Softmax()]
    meta = {"kind": "tiny_cnn", "L": L, "widths": [c1, c2, c3], "classes": CLASS_NAMES[:n_classes]}
    return Model(layers, (height, cols, 1), meta, dtype=dtype)


def build_cnn_lstm(L: int, cfg=None, seed: int = 0, widths: dict | None = None,
                   n_classes: int = 5, dtype=np.float64) -> Model:
    """Shared per-frame conv trunk to a 16-wide feature, LSTM over time, dense head."""
    if L < 1:
        raise ValueError("L must be >= 1")
    rows, cols = _frame_shape(cfg)
    w = dict(CNN_LSTM_WIDTHS, **(widths or {}))
    rng = np.random.default_rng(seed)
    flat = (rows // 4) * (cols // 4) * w["c2"]
    layers = [
        Standardize(),
        FoldTime(),
        Conv2d(1, w["c1"], rng=rng), ReLU(), MaxPool2d(),
        Conv2d(w["c1"], w["c2"], rng=rng), ReLU(), MaxPool2d(),
        Dropout(0.5),
        Flatten(),
        Dense(flat, w["feature"], rng),
        UnfoldTime(L),
        LstmCell(w["feature"], w["hidden"], rng),
        Dense(w["hidden"], n_classes, rng),
        Softmax(),
    ]
    meta = {"kind": "cnn_lstm", "L": L, "widths": w, "classes": CLASS_NAMES[:n_classes]}
    return Model(layers, (L, rows, cols, 1), meta, dtype=dtype)


def build_noise_detector(cfg=None, seed: int = 0, window: int = 1, dtype=np.float64,
                         frame_shape: tuple[int, int] | None = None) -> Model:
    """Binary motion-vs-noise classifier over one RDI (or ``window`` stacked RDIs)."""
    rows, cols = frame_shape or _frame_shape(cfg)
    rng = np.random.default_rng(seed)
    # batch-level input norm keeps the absolute echo level, the main noise cue
    layers = [BatchNorm(1),
              Conv2d(1, 4, rng=rng, bias=False), BatchNorm(4), ReLU(), MaxPool2d(),
              Conv2d(4, 8, rng=rng, bias=False), BatchNorm(8), ReLU(), MaxPool2d(),
              Flatten(), Dense((rows * window // 4) * (cols // 4) * 8, 2, rng), Softmax()]
    meta = {"kind": "noise_detector", "L": window, "classes": ["Motion", "Noise"]}
    return Model(layers, (rows * window, cols, 1), meta, dtype=dtype)


BUILDERS = {"tiny_cnn": build_tiny_cnn, "cnn_lstm": build_cnn_lstm}


def build_model(kind: str, L: int, cfg=None, seed: int = 0, dtype=np.float64) -> Model:
    if kind == "noise_detector":
        return build_noise_detector(cfg, seed, window=L, dtype=dtype)
    try:
        return BUILDERS[kind](L, cfg, seed=seed, dtype=dtype)
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}") from None


def prepare_input(model: Model, windows: np.ndarray) -> np.ndarray:
    """Reshape (N, L, rows, cols) RDI windows into the model's input layout."""
    windows = np.asarray(windows)
    n, L, rows, cols = windows.shape
    if model.meta.get("kind") == "cnn_lstm":
        return windows[..., None]
    # stack frames top to bottom along the range axis
    return windows.reshape(n, L * rows, cols, 1)


# -- datasets -----------------------------------------------------------------


@dataclass
class GestureDataset:
    """Fixed-length RDI windows with class indices and a stratified split."""

    x: np.ndarray  # (N, L, rows, cols)
    y: np.ndarray  # (N,)
    train_idx: np.ndarray
    val_idx: np.ndarray
    seed: int = 0
    classes: list[str] = field(default_factory=lambda: list(CLASS_NAMES))

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("x and y lengths differ")
        if np.intersect1d(self.train_idx, self.val_idx).size:
            raise ValueError("a sample is in both splits")

    @property
    def L(self) -> int:
        return self.x.shape[1]

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        idx = {"train": self.train_idx, "val": self.val_idx}[name]
        return self.x[idx], self.y[idx]


def stratified_split(y: np.ndarray, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    train, val = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        n_val = int(round(len(idx) * val_fraction))
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def build_dataset(sequences: list[RdiSequence], L: int, seed: int = 0, val_fraction: float = 0.2,
                  classes=CLASS_NAMES, augment_factor: int = 1, offset: int = 0) -> GestureDataset:
    """Window every sequence to its frames ``offset .. offset+L-1`` and split 80/20 by class.

    Augmented copies (time-stretched via restoration) are generated for the
    training split only, so no validation sequence leaks into training.
    """
    classes = list(classes)
    labels = np.array([classes.index(s.label) for s in sequences])
    train_seq, val_seq = stratified_split(labels, val_fraction, seed)

    def window(seq: RdiSequence) -> np.ndarray:
        if seq.num_dropped:
            raise ValueError("restore dropped frames before windowing")
        values = seq.values()
        if len(values) < offset + L:
            raise ValueError(f"sequence of {len(values)} frames too short for window {offset}+{L}")
        return values[offset:offset + L]

    in_train = np.zeros(len(sequences), bool)
    in_train[train_seq] = True
    xs, ys, is_train = [], [], []
    for i, seq in enumerate(sequences):
        variants = augment(seq, augment_factor) if in_train[i] and augment_factor > 1 else [seq]
        for v in variants:
            xs.append(window(v))
            ys.append(labels[i])
            is_train.append(in_train[i])
    is_train = np.array(is_train)
    return GestureDataset(np.stack(xs), np.array(ys), np.flatnonzero(is_train),
                          np.flatnonzero(~is_train), seed, classes)


# -- training -----------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    weight_decay: float = 0.0
    seed: int = 0
    # dataset-side settings, consumed by build_dataset callers
    val_fraction: float = 0.2
    augment_factor: int = 1


@dataclass
class TrainReport:
    model_kind: str
    L: int
    param_count: int
    classes: list[str]
    epochs: list[dict] = field(default_factory=list)
    confusion: list[list[float]] = field(default_factory=list)
    per_class_accuracy: dict = field(default_factory=dict)
    val_accuracy: float = 0.0
    hyper: dict = field(default_factory=dict)

    @property
    def best_val_accuracy(self) -> float:
        return max((e["val_accuracy"] for e in self.epochs), default=0.0)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def confusion_csv(self) -> str:
        lines = ["true\\pred," + ",".join(self.classes)]
        for name, row in zip(self.classes, self.confusion):
            lines.append(name + "," + ",".join(f"{v:.6f}" for v in row))
        return "\n".join(lines) + "\n"


def predict_proba(model: Model, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode class probabilities for already prepared inputs."""
    outs = [forward(model, x[i:i + batch_size], mode="eval")[0] for i in range(0, len(x), batch_size)]
    return np.concatenate(outs) if outs else np.zeros((0,) + model.output_shape)


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Row-normalised confusion matrix; rows of absent classes stay zero."""
    counts = np.zeros((n_classes, n_classes))
    np.add.at(counts, (np.asarray(y_true), np.asarray(y_pred)), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def evaluate(model: Model, windows: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Confusion matrix and accuracy of ``model`` on raw (N, L, rows, cols) windows."""
    if len(windows) == 0:
        raise ValueError("cannot evaluate on an empty split")
    probs = predict_proba(model, prepare_input(model, windows))
    pred = probs.argmax(axis=1)
    return confusion_matrix(y, pred, probs.shape[1]), float((pred == np.asarray(y)).mean())


def _mean_loss(model, x, y):
    probs = predict_proba(model, x)
    return cross_entropy(probs, y)[0], float((probs.argmax(1) == y).mean())


def train(model: Model, dataset: GestureDataset, hyper: TrainConfig | None = None,
          progress=None) -> TrainReport:
    """Minibatch SGD with momentum on the training split; deterministic per seed."""
    hyper = hyper or TrainConfig()
    x_train, y_train = dataset.split("train")
    x_val, y_val = dataset.split("val")
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("train and val splits must both be non-empty")
    x_train = prepare_input(model, x_train).astype(model.dtype)
    x_val = prepare_input(model, x_val).astype(model.dtype)
    rng = np.random.default_rng(hyper.seed)
    report = TrainReport(model.meta.get("kind", "model"), int(model.meta.get("L", dataset.L)),
                         model.param_count(), list(model.meta.get("classes", dataset.classes)),
                         hyper=asdict(hyper))
    for epoch in range(hyper.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), hyper.batch_size):
            batch = order[start:start + hyper.batch_size]
            probs, cache = forward(model, x_train[batch], mode="train", rng=rng)
            loss, grad = cross_entropy(probs, y_train[batch])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}: "
                    f"{int(np.isnan(probs).sum())} NaN probabilities"
                )
            grads = backward(model, cache, grad)
            sgd_step(model, grads, hyper.lr, hyper.momentum, hyper.weight_decay)
        train_loss, train_acc = _mean_loss(model, x_train, y_train)
        val_loss, val_acc = _mean_loss(model, x_val, y_val)
        record = {"epoch": epoch + 1, "train_loss": train_loss, "train_accuracy": train_acc,
                  "val_loss": val_loss, "val_accuracy": val_acc,
                  "seconds": time.perf_counter() - t0}
        report.epochs.append(record)
        log.info("epoch %d: train %.4f/%.3f val %.4f/%.3f", epoch + 1, train_loss, train_acc,
                 val_loss, val_acc)
        if progress:
            progress(record)
    confusion, acc = evaluate(model, dataset.split("val")[0], y_val)
    report.confusion = confusion.tolist()
    report.val_accuracy = acc
    report.per_class_accuracy = {name: float(confusion[i, i]) for i, name in enumerate(report.classes)}
    return report


def infer_window(model: Model, window) -> tuple[str, float, float]:
    """Classify one window of ``L`` RDIs; returns ``(label, confidence, latency_ms)``."""
    t0 = time.perf_counter()
    if isinstance(window, RdiSequence):
        arr = window.values()
    elif len(window) and isinstance(window[0], Rdi):
        arr = np.stack([r.values for r in window])
    else:
        arr = np.asarray(window, dtype=float)
    L = int(model.meta.get("L", arr.shape[0]))
    if arr.ndim != 3 or arr.shape[0] != L:
        raise ValueError(f"expected a window of {L} frames, got shape {arr.shape}")
    probs = forward(model, prepare_input(model, arr[None]), mode="eval")[0][0]
    k = int(probs.argmax())
    latency_ms = (time.perf_counter() - t0) * 1e3
    classes = model.meta.get("classes", CLASS_NAMES)
    return classes[k], float(probs[k]), latency_ms
