"""Sequential networks over a LayerSpec list: init, forward, backward, loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import numeric_error, shape_error
from .layers import BUFFERS, LayerSpec, fan_in, infer_shapes, layer_backward, layer_forward, param_shapes, softmax_rows


@dataclass
class ModelParams:
    """Parameter tensors keyed ``"<layer index>.<name>"``."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    seed: int = 0

    def layer(self, index: int) -> dict[str, np.ndarray]:
        prefix = f"{index}."
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    def trainable(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if k.rsplit(".", 1)[1] not in BUFFERS}

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()}, self.seed)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({k: v.astype(dtype) for k, v in self.tensors.items()}, self.seed)


def init_params(specs, seed: int = 0, dtype=np.float32) -> ModelParams:
    """He-uniform weights, zero biases, unit gamma, zero beta."""
    rng = np.random.Generator(np.random.Philox(seed))
    tensors = {}
    for i, spec in enumerate(specs):
        for name, shape in param_shapes(spec).items():
            if name == "weight":
                limit = np.sqrt(6.0 / fan_in(spec))
                value = rng.uniform(-limit, limit, size=shape)
            elif name in ("gamma", "running_var"):
                value = np.ones(shape)
            else:
                value = np.zeros(shape)
            tensors[f"{i}.{name}"] = value.astype(dtype)
    return ModelParams(tensors, seed)


def param_count(specs) -> int:
    """Trainable element count from the closed forms per layer kind."""
    total = 0
    for s in specs:
        k, cin, cout = s.kernel, s.in_channels, s.out_channels
        if s.kind == "conv2d":
            total += k * k * cin * cout + cout
        elif s.kind == "depthwise_conv2d":
            total += k * k * cin + cin
        elif s.kind in ("pointwise_conv2d", "dense"):
            total += cin * cout + cout
        elif s.kind == "batchnorm":
            total += 2 * cin
    return total


@dataclass
class Tape:
    inputs: list
    caches: list


def _check_input(specs, x):
    if x.ndim < 2:
        raise shape_error(f"expected a batched input, got shape {x.shape}")
    infer_shapes(specs, x.shape[1:])


def forward(specs, params: ModelParams, x, mode: str = "eval", rng=None, *,
            logits: bool = False, tape: bool = False):
    """Run the network on a batch.

    ``mode`` is ``"train"`` or ``"eval"``; in eval mode dropout is the
    identity and batch norm uses running statistics. With ``logits=True``
    a trailing softmax layer is skipped. With ``tape=True`` returns
    ``(output, Tape)`` for :func:`backward_from`.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', not {mode!r}")
    x = np.asarray(x)
    _check_input(specs, x)
    train = mode == "train"
    layers = list(specs)
    if logits and layers and layers[-1].kind == "softmax":
        layers = layers[:-1]
    inputs, caches = [], []
    for i, spec in enumerate(layers):
        inputs.append(x)
        skip = inputs[spec.source] if spec.kind == "residual_add" else None
        x, cache = layer_forward(spec, params.layer(i), x, train, rng, skip)
        caches.append(cache)
    if tape:
        return x, Tape(inputs, caches)
    return x


def backward_from(specs, params: ModelParams, tape: Tape, dout):
    """Reverse pass; returns gradients keyed like params plus ``"input"``."""
    grads = {}
    pending: dict[int, np.ndarray] = {}
    g = dout
    for i in range(len(tape.caches) - 1, -1, -1):
        spec = specs[i]
        g, layer_grads = layer_backward(spec, params.layer(i), tape.caches[i], g)
        for name, value in layer_grads.items():
            grads[f"{i}.{name}"] = value
        if spec.kind == "residual_add":
            pending[spec.source] = pending.get(spec.source, 0) + g
        if i in pending:
            g = g + pending.pop(i)
    grads["input"] = g
    return grads


def cross_entropy(logits, labels):
    """Mean batch cross-entropy and its gradient w.r.t. the logits."""
    z = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if not np.all(np.isfinite(z)):
        raise numeric_error("non-finite logits")
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted[np.arange(n), labels] - log_norm
    loss = float(-log_p.mean())
    grad = softmax_rows(z)
    grad[np.arange(n), labels] -= 1
    return loss, grad / z.dtype.type(n)


def cross_entropy_loss(logits, labels) -> float:
    return cross_entropy(logits, labels)[0]


def backward(specs, params: ModelParams, x, labels, rng=None):
    """Loss and exact gradients of mean cross-entropy on a train-mode pass."""
    out, tape = forward(specs, params, x, "train", rng, logits=True, tape=True)
    loss, dlogits = cross_entropy(out, labels)
    return loss, backward_from(specs, params, tape, dlogits)


def predict_proba(specs, params: ModelParams, x) -> np.ndarray:
    z = forward(specs, params, x, "eval", logits=True)
    return softmax_rows(z.astype(np.float64))


def as_specs(items) -> list[LayerSpec]:
    return [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in items]
