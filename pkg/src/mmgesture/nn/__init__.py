"""Minimal numpy neural-network engine: layers, backprop, SGD, gradient checks."""

from .gradcheck import grad_check
from .layers import (
    BatchNorm,
    Context,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    FoldTime,
    Layer,
    LstmCell,
    MaxPool2d,
    ReLU,
    ShapeError,
    Softmax,
    Standardize,
    UnfoldTime,
    layer_from_spec,
)
from .model import (
    Model,
    StaleCacheError,
    backward,
    cross_entropy,
    forward,
    sgd_step,
    squared_error,
)


def lstm_forward(cell: LstmCell, sequence, h0=None, c0=None, return_state: bool = False):
    """Run one sequence of shape (T, n_in) through ``cell``; returns the final hidden state."""
    import numpy as np

    seq = np.asarray(sequence, dtype=cell.params["Wx"].dtype)
    if seq.ndim != 2 or seq.shape[1] != cell.n_in:
        raise ShapeError(f"expected (T, {cell.n_in}) sequence, got {seq.shape}")
    h, c, _ = cell.run(seq[None], h0, c0)
    return (h[0], c[0]) if return_state else h[0]


__all__ = [
    "BatchNorm", "Context", "Conv2d", "Dense", "Dropout", "Flatten", "FoldTime", "Layer",
    "LstmCell", "MaxPool2d", "Model", "ReLU", "ShapeError", "Softmax", "StaleCacheError",
    "Standardize", "UnfoldTime", "backward", "cross_entropy", "forward", "grad_check",
    "layer_from_spec", "lstm_forward", "sgd_step", "squared_error",
]
