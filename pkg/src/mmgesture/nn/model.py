from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Context, Layer, ShapeError, layer_from_spec


class StaleCacheError(RuntimeError):
    pass


class Model:
    """An ordered stack of layers with a fixed per-sample input shape."""

    def __init__(self, layers: list[Layer], input_shape: tuple, meta: dict | None = None,
                 dtype=np.float64):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.meta = dict(meta or {})
        self.version = 0
        self.velocity: dict[tuple[int, str], np.ndarray] = {}
        self.shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                self.shapes.append(tuple(layer.out_shape(self.shapes[-1])))
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        self.dtype = np.dtype(dtype)
        for layer in self.layers:
            layer.astype(self.dtype)

    @property
    def output_shape(self) -> tuple:
        return self.shapes[-1]

    def parameters(self):
        for i, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield i, name, value

    def param_count(self) -> int:
        return int(sum(v.size for _, _, v in self.parameters()))

    def state(self) -> list[tuple[str, np.ndarray]]:
        """Named parameter and buffer arrays in a stable order."""
        out = []
        for i, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                out.append((f"{i}.{name}", value))
            for name, value in layer.buffers.items():
                out.append((f"{i}.{name}", value))
        return out

    def load_state(self, arrays: dict[str, np.ndarray]):
        for i, layer in enumerate(self.layers):
            for store in (layer.params, layer.buffers):
                for name in store:
                    key = f"{i}.{name}"
                    value = np.asarray(arrays[key], dtype=self.dtype)
                    if value.shape != store[name].shape:
                        raise ShapeError(f"{key}: expected {store[name].shape}, got {value.shape}")
                    store[name] = value.copy()
        self.version += 1
        self.velocity.clear()

    def manifest(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "dtype": self.dtype.name,
            "meta": self.meta,
            "param_count": self.param_count(),
            "layers": [layer.spec() for layer in self.layers],
            "tensors": [{"name": k, "shape": list(v.shape)} for k, v in self.state()],
        }

    @classmethod
    def from_manifest(cls, manifest: dict) -> "Model":
        layers = [layer_from_spec(s) for s in manifest["layers"]]
        return cls(layers, tuple(manifest["input_shape"]), manifest.get("meta"),
                   dtype=manifest.get("dtype", "float64"))

    def copy(self) -> "Model":
        clone = Model.from_manifest(self.manifest())
        clone.load_state({k: v for k, v in self.state()})
        return clone

    def __repr__(self):
        body = "\n".join(f"  [{i}] {layer!r} -> {self.shapes[i + 1]}" for i, layer in enumerate(self.layers))
        return f"Model(input={self.input_shape}, params={self.param_count()})\n{body}"


@dataclass
class Cache:
    version: int
    entries: list = field(default_factory=list)


def forward(model: Model, x, mode: str = "eval", rng: np.random.Generator | None = None,
            dropout: bool = True, update_stats: bool = True):
    """Run ``x`` (batch-first) through the model.

    Returns ``(output, cache)``; the cache is ``None`` in eval mode.  In train
    mode ``dropout=False`` disables dropout and ``update_stats=False`` freezes
    the batch-norm running statistics.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    ctx = Context(train=train, rng=rng, dropout=dropout, update_stats=update_stats)
    x = np.asarray(x, dtype=model.dtype)
    cache = Cache(model.version) if train else None
    for i, layer in enumerate(model.layers):
        if x.shape[1:] != model.shapes[i]:
            raise ShapeError(
                f"layer {i} ({layer.kind}) expects per-sample shape {model.shapes[i]}, "
                f"got {x.shape[1:]}"
            )
        x, entry = layer.forward(x, ctx)
        if train:
            cache.entries.append(entry)
    return x, cache


def backward(model: Model, cache: Cache | None, loss_grad) -> list[dict[str, np.ndarray]]:
    """Gradients of every parameter, one dict per layer, from a train-mode cache."""
    if cache is None:
        raise StaleCacheError("backward needs the cache of a train-mode forward pass")
    if cache.version != model.version or len(cache.entries) != len(model.layers):
        raise StaleCacheError("cache was produced before the last parameter update")
    grads: list[dict] = [None] * len(model.layers)
    dy = np.asarray(loss_grad, dtype=model.dtype)
    for i in reversed(range(len(model.layers))):
        dy, grads[i] = model.layers[i].backward(dy, cache.entries[i])
    return grads


def sgd_step(model: Model, grads, lr: float, momentum: float = 0.9, weight_decay: float = 0.0) -> Model:
    """In-place SGD with heavy-ball momentum; invalidates outstanding caches."""
    for i, layer in enumerate(model.layers):
        for name, param in layer.params.items():
            g = grads[i][name]
            if weight_decay:
                g = g + weight_decay * param
            v = model.velocity.get((i, name))
            if v is None:
                v = model.velocity[(i, name)] = np.zeros_like(param)
            v *= momentum
            v -= lr * g
            param += v
    model.version += 1
    return model


def cross_entropy(probs: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and its gradient w.r.t. the probabilities."""
    labels = np.asarray(labels, dtype=np.int64)
    n = probs.shape[0]
    picked = np.maximum(probs[np.arange(n), labels], np.finfo(probs.dtype).tiny)
    loss = float(-np.log(picked).mean())
    grad = np.zeros_like(probs)
    grad[np.arange(n), labels] = -1.0 / (picked * n)
    return loss, grad


def squared_error(output: np.ndarray, target: np.ndarray):
    diff = output - target
    return float((diff * diff).sum()), 2.0 * diff
