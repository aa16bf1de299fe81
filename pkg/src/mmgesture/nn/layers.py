"""Layer implementations: forward/backward pairs on NHWC numpy arrays.

Every layer maps a batch ``x`` of shape ``(N, *in_shape)`` to ``(N, *out_shape)``
(``FoldTime``/``UnfoldTime`` additionally trade the time axis against the
batch axis).  ``forward`` returns ``(y, cache)`` and ``backward`` turns the
upstream gradient and that cache into ``(dx, grads)``, where ``grads`` has
one entry per parameter tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


@dataclass
class Context:
    train: bool = False
    rng: np.random.Generator | None = None
    dropout: bool = True
    update_stats: bool = True


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Layer:
    kind = "Layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def config(self) -> dict:
        return {}

    def spec(self) -> dict:
        return {"kind": self.kind, **self.config()}

    def forward(self, x, ctx: Context):
        raise NotImplementedError

    def backward(self, dy, cache):
        raise NotImplementedError

    def astype(self, dtype):
        for store in (self.params, self.buffers):
            for k, v in store.items():
                store[k] = v.astype(dtype)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{self.kind}({args})"


def he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Conv2d(Layer):
    """3x3 (by default) stride-1 convolution with zero 'same' padding."""

    kind = "Conv2d"

    def __init__(self, in_ch: int, out_ch: int, k: int = 3, rng=None, bias: bool = True):
        super().__init__()
        if k % 2 != 1:
            raise ValueError("only odd kernel sizes keep 'same' padding symmetric")
        self.in_ch, self.out_ch, self.k, self.bias = in_ch, out_ch, k, bias
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = he_uniform(rng, (k, k, in_ch, out_ch), k * k * in_ch)
        if bias:  # redundant when a BatchNorm follows
            self.params["b"] = np.zeros(out_ch)

    def config(self):
        return {"in_ch": self.in_ch, "out_ch": self.out_ch, "k": self.k, "bias": self.bias}

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[2] != self.in_ch:
            raise ShapeError(f"Conv2d expects (H, W, {self.in_ch}), got {in_shape}")
        return (in_shape[0], in_shape[1], self.out_ch)

    def forward(self, x, ctx):
        n, h, w, c = x.shape
        p = self.k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        win = sliding_window_view(xp, (self.k, self.k), axis=(1, 2))  # (N,H,W,C,k,k)
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, self.k * self.k * c)
        wmat = self.params["W"].reshape(-1, self.out_ch)
        y = cols @ wmat
        if self.bias:
            y += self.params["b"]
        y = y.reshape(n, h, w, self.out_ch)
        return y, (x.shape, cols)

    def backward(self, dy, cache):
        (n, h, w, c), cols = cache
        k, p = self.k, self.k // 2
        d2 = dy.reshape(-1, self.out_ch)
        wmat = self.params["W"].reshape(-1, self.out_ch)
        grads = {"W": (cols.T @ d2).reshape(self.params["W"].shape)}
        if self.bias:
            grads["b"] = d2.sum(axis=0)
        dcols = (d2 @ wmat.T).reshape(n, h, w, k, k, c)
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
        return dxp[:, p:p + h, p:p + w, :], grads


class MaxPool2d(Layer):
    """2x2 max pooling, stride 2; odd trailing rows/columns are discarded."""

    kind = "MaxPool2d"

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] < 2 or in_shape[1] < 2:
            raise ShapeError(f"MaxPool2d needs (H>=2, W>=2, C), got {in_shape}")
        return (in_shape[0] // 2, in_shape[1] // 2, in_shape[2])

    def forward(self, x, ctx):
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        blocks = (x[:, : 2 * h2, : 2 * w2, :]
                  .reshape(n, h2, 2, w2, 2, c)
                  .transpose(0, 1, 3, 5, 2, 4)
                  .reshape(n, h2, w2, c, 4))
        arg = blocks.argmax(axis=-1)
        y = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
        return y, (x.shape, arg)

    def backward(self, dy, cache):
        (n, h, w, c), arg = cache
        h2, w2 = h // 2, w // 2
        blocks = np.zeros((n, h2, w2, c, 4), dtype=dy.dtype)
        np.put_along_axis(blocks, arg[..., None], dy[..., None], axis=-1)
        dx = np.zeros((n, h, w, c), dtype=dy.dtype)
        dx[:, : 2 * h2, : 2 * w2, :] = (blocks.reshape(n, h2, w2, c, 2, 2)
                                         .transpose(0, 1, 4, 2, 5, 3)
                                         .reshape(n, 2 * h2, 2 * w2, c))
        return dx, {}


class BatchNorm(Layer):
    """Per-channel normalisation over every axis but the last."""

    kind = "BatchNorm"

    def __init__(self, ch: int, momentum: float = 0.9, eps: float = 1e-8):
        super().__init__()
        self.ch, self.momentum, self.eps = ch, momentum, eps
        self.params["gamma"] = np.ones(ch)
        self.params["beta"] = np.zeros(ch)
        self.buffers["running_mean"] = np.zeros(ch)
        self.buffers["running_var"] = np.ones(ch)

    def config(self):
        return {"ch": self.ch, "momentum": self.momentum, "eps": self.eps}

    def out_shape(self, in_shape):
        if in_shape[-1] != self.ch:
            raise ShapeError(f"BatchNorm({self.ch}) got {in_shape}")
        return in_shape

    def forward(self, x, ctx):
        axes = tuple(range(x.ndim - 1))
        gamma, beta = self.params["gamma"], self.params["beta"]
        if not ctx.train:
            xhat = (x - self.buffers["running_mean"]) / np.sqrt(self.buffers["running_var"] + self.eps)
            return gamma * xhat + beta, None
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        if ctx.update_stats:
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mean
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
        return gamma * xhat + beta, (xhat, inv)

    def backward(self, dy, cache):
        xhat, inv = cache
        axes = tuple(range(dy.ndim - 1))
        grads = {"gamma": (dy * xhat).sum(axis=axes), "beta": dy.sum(axis=axes)}
        dxhat = dy * self.params["gamma"]
        dx = inv * (dxhat - dxhat.mean(axis=axes) - xhat * (dxhat * xhat).mean(axis=axes))
        return dx, grads


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x, ctx):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache):
        return dy * cache, {}


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by 1/(1-p) during training."""

    kind = "Dropout"

    def __init__(self, p: float = 0.5):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")
        self.p = p

    def config(self):
        return {"p": self.p}

    def forward(self, x, ctx):
        if not (ctx.train and ctx.dropout) or self.p == 0.0:
            return x, None
        if ctx.rng is None:
            raise ValueError("training-mode dropout needs an rng")
        mask = (ctx.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        mask = mask.astype(x.dtype)
        return x * mask, mask

    def backward(self, dy, cache):
        return (dy if cache is None else dy * cache), {}


class Flatten(Layer):
    kind = "Flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, ctx):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), {}


class Dense(Layer):
    kind = "Dense"

    def __init__(self, n_in: int, n_out: int, rng=None, weight=None, bias=None):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        rng = rng if rng is not None else np.random.default_rng(0)
        w = he_uniform(rng, (n_in, n_out), n_in) if weight is None else np.array(weight, dtype=float)
        b = np.zeros(n_out) if bias is None else np.array(bias, dtype=float)
        if w.shape != (n_in, n_out) or b.shape != (n_out,):
            raise ShapeError(f"Dense({n_in}, {n_out}) given weight {w.shape}, bias {b.shape}")
        self.params["W"], self.params["b"] = w, b

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out}

    def out_shape(self, in_shape):
        if in_shape[-1] != self.n_in:
            raise ShapeError(f"Dense expects last dim {self.n_in}, got {in_shape}")
        return in_shape[:-1] + (self.n_out,)

    def forward(self, x, ctx):
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, dy, cache):
        x = cache
        x2, d2 = x.reshape(-1, self.n_in), dy.reshape(-1, self.n_out)
        return dy @ self.params["W"].T, {"W": x2.T @ d2, "b": d2.sum(axis=0)}


class LstmCell(Layer):
    """Single-layer LSTM over (N, T, n_in) returning the final hidden state.

    Gate blocks in the fused weight matrices are ordered input, forget,
    output, candidate.
    """

    kind = "LstmCell"

    def __init__(self, n_in: int, hidden: int, rng=None, init_scale: float = 0.08):
        super().__init__()
        self.n_in, self.hidden = n_in, hidden
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["Wx"] = rng.uniform(-init_scale, init_scale, (n_in, 4 * hidden))
        self.params["Wh"] = rng.uniform(-init_scale, init_scale, (hidden, 4 * hidden))
        self.params["b"] = np.zeros(4 * hidden)

    def config(self):
        return {"n_in": self.n_in, "hidden": self.hidden}

    def out_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.n_in:
            raise ShapeError(f"LstmCell expects (T, {self.n_in}), got {in_shape}")
        return (self.hidden,)

    def run(self, x, h0=None, c0=None):
        n, steps, _ = x.shape
        hd = self.hidden
        h = np.zeros((n, hd), x.dtype) if h0 is None else np.asarray(h0, x.dtype).reshape(n, hd)
        c = np.zeros((n, hd), x.dtype) if c0 is None else np.asarray(c0, x.dtype).reshape(n, hd)
        wx, wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        xw = x @ wx + b  # input projection for all steps at once
        trace = []
        for t in range(steps):
            a = xw[:, t] + h @ wh
            i = _sigmoid(a[:, :hd])
            f = _sigmoid(a[:, hd:2 * hd])
            o = _sigmoid(a[:, 2 * hd:3 * hd])
            g = np.tanh(a[:, 3 * hd:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            trace.append((h, c, i, f, o, g, tc))
            h, c = o * tc, c_new
        return h, c, trace

    def forward(self, x, ctx):
        h, _, trace = self.run(x)
        return h, (x, trace)

    def backward(self, dy, cache):
        x, trace = cache
        hd = self.hidden
        wx, wh = self.params["Wx"], self.params["Wh"]
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dx = np.zeros_like(x)
        dh = dy
        dc = np.zeros_like(dy)
        for t in reversed(range(len(trace))):
            h_prev, c_prev, i, f, o, g, tc = trace[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            da = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                do * o * (1.0 - o),
                dc * i * (1.0 - g * g),
            ], axis=1)
            grads["Wx"] += x[:, t].T @ da
            grads["Wh"] += h_prev.T @ da
            grads["b"] += da.sum(axis=0)
            dx[:, t] = da @ wx.T
            dh = da @ wh.T
            dc = dc * f
        return dx, grads


class Softmax(Layer):
    kind = "Softmax"

    def forward(self, x, ctx):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=-1, keepdims=True)
        return s, s

    def backward(self, dy, cache):
        s = cache
        return s * (dy - (dy * s).sum(axis=-1, keepdims=True)), {}


class Standardize(Layer):
    """Per-sample zero-mean, unit-variance scaling over all non-batch axes."""

    kind = "Standardize"

    def __init__(self, eps: float = 1e-8):
        super().__init__()
        self.eps = eps

    def config(self):
        return {"eps": self.eps}

    def forward(self, x, ctx):
        axes = tuple(range(1, x.ndim))
        mean = x.mean(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(x.var(axis=axes, keepdims=True) + self.eps)
        xhat = (x - mean) * inv
        return xhat, (xhat, inv)

    def backward(self, dy, cache):
        xhat, inv = cache
        axes = tuple(range(1, dy.ndim))
        dx = inv * (dy - dy.mean(axis=axes, keepdims=True)
                    - xhat * (dy * xhat).mean(axis=axes, keepdims=True))
        return dx, {}


class FoldTime(Layer):
    """(N, T, ...) -> (N*T, ...) so per-frame layers see every frame as a sample."""

    kind = "FoldTime"

    def out_shape(self, in_shape):
        return in_shape[1:]

    def forward(self, x, ctx):
        return x.reshape((-1,) + x.shape[2:]), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), {}


class UnfoldTime(Layer):
    kind = "UnfoldTime"

    def __init__(self, steps: int):
        super().__init__()
        self.steps = steps

    def config(self):
        return {"steps": self.steps}

    def out_shape(self, in_shape):
        return (self.steps,) + in_shape

    def forward(self, x, ctx):
        if x.shape[0] % self.steps:
            raise ShapeError(f"batch {x.shape[0]} not divisible by {self.steps} steps")
        return x.reshape((-1, self.steps) + x.shape[1:]), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), {}


LAYER_TYPES = {cls.kind: cls for cls in (
    Conv2d, MaxPool2d, BatchNorm, ReLU, Dropout, Flatten, Dense, LstmCell,
    Softmax, Standardize, FoldTime, UnfoldTime,
)}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    cls = LAYER_TYPES[spec.pop("kind")]
    return cls(**spec)
