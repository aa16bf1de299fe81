"""Central finite-difference check of analytic parameter gradients."""

from __future__ import annotations

import numpy as np

from .model import Model, backward, cross_entropy, forward, squared_error


def _loss(model, x, target, loss_fn):
    out, cache = forward(model, x, mode="train", dropout=False, update_stats=False)
    loss, grad = loss_fn(out, target)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    return loss, grad, cache


def grad_check(model: Model, x, target, eps: float = 1e-5, max_per_tensor: int = 200,
               loss_fn=None, seed: int = 0) -> float:
    """Largest relative error between backprop and finite-difference gradients.

    Runs in train mode with dropout off and batch-norm running statistics
    frozen, so the loss is a deterministic function of the parameters.
    Tensors with more than ``max_per_tensor`` entries are checked on a random
    subset of that size.
    """
    if model.dtype != np.float64:
        raise TypeError("gradient checking needs a float64 model")
    if loss_fn is None:
        integer_target = np.issubdtype(np.asarray(target).dtype, np.integer)
        loss_fn = cross_entropy if integer_target else squared_error
    _, grad_out, cache = _loss(model, x, target, loss_fn)
    analytic = backward(model, cache, grad_out)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i, name, param in model.parameters():
        flat = param.reshape(-1)
        g_flat = analytic[i][name].reshape(-1)
        idx = np.arange(flat.size)
        if flat.size > max_per_tensor:
            idx = rng.choice(flat.size, size=max_per_tensor, replace=False)
        for j in idx:
            orig = flat[j]
            flat[j] = orig + eps
            up = _loss(model, x, target, loss_fn)[0]
            flat[j] = orig - eps
            down = _loss(model, x, target, loss_fn)[0]
            flat[j] = orig
            fd = (up - down) / (2.0 * eps)
            an = g_flat[j]
            err = abs(an - fd) / max(abs(an) + abs(fd), 1e-8)
            worst = max(worst, err)
    return worst
