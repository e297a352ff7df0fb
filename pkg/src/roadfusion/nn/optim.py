"""SGD and Adam, updating ModelParams tensors in place."""

from __future__ import annotations

import numpy as np

from ..core import config_error, numeric_error


class SGD:
    def __init__(self, lr: float):
        if lr <= 0:
            raise config_error("learning rate must be positive")
        self.lr = lr

    def step(self, params, grads):
        updates = {k: params.tensors[k] - self.lr * g for k, g in grads.items() if k in params.tensors}
        _commit(params, updates)


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise config_error("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        updates = {}
        for k, g in grads.items():
            if k not in params.tensors:
                continue
            p = params.tensors[k]
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            v = self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            step = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            updates[k] = p - step.astype(p.dtype)
        _commit(params, updates)


def _commit(params, updates):
    for k, value in updates.items():
        if not np.all(np.isfinite(value)):
            raise numeric_error("non-finite parameter update", k)
    for k, value in updates.items():
        params.tensors[k][...] = value


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise config_error(f"unknown optimizer {name!r}")
