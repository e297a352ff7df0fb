"""Layer specs and their forward/backward kernels (NCHW layout).

A network is a plain list of :class:`LayerSpec`. ``residual_add`` at index
``j`` with ``source=s`` adds the *input* of layer ``s`` to its own input,
which is how a block's skip path is expressed in a flat sequence.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..core import config_error, shape_error

KINDS = (
    "conv2d",
    "depthwise_conv2d",
    "pointwise_conv2d",
    "batchnorm",
    "relu",
    "maxpool",
    "global_avgpool",
    "dropout",
    "dense",
    "softmax",
    "residual_add",
)

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    p: float = 0.0
    pool: int = 0
    source: int = -1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise config_error(f"unknown layer kind {self.kind!r}")
        if self.kind == "depthwise_conv2d" and self.out_channels != self.in_channels:
            raise config_error("depthwise convolution needs out_channels == in_channels")
        if self.kind == "pointwise_conv2d" and self.kernel != 1:
            raise config_error("pointwise convolution is 1x1")
        if self.kind == "dropout" and not 0.0 <= self.p < 1.0:
            raise config_error("dropout probability must be in [0, 1)")
        if self.kind in ("conv2d", "depthwise_conv2d") and (self.kernel < 1 or self.stride < 1):
            raise config_error("kernel and stride must be positive")
        if self.kind == "maxpool" and self.pool < 1:
            raise config_error("pool size must be positive")

    def to_dict(self) -> dict:
        defaults = {f.name: f.default for f in fields(self)}
        return {k: v for k, v in asdict(self).items() if k == "kind" or v != defaults[k]}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)

    @property
    def trainable(self) -> bool:
        return self.kind in ("conv2d", "depthwise_conv2d", "pointwise_conv2d", "batchnorm", "dense")


def conv2d(cin, cout, kernel=3, stride=1, padding=1):
    return LayerSpec("conv2d", cin, cout, kernel, stride, padding)


def depthwise(channels, kernel=3, stride=1, padding=1):
    return LayerSpec("depthwise_conv2d", channels, channels, kernel, stride, padding)


def pointwise(cin, cout):
    return LayerSpec("pointwise_conv2d", cin, cout, kernel=1)


def batchnorm(channels):
    return LayerSpec("batchnorm", channels, channels)


def relu():
    return LayerSpec("relu")


def maxpool(size=2):
    return LayerSpec("maxpool", pool=size)


def global_avgpool():
    return LayerSpec("global_avgpool")


def dropout(p=0.5):
    return LayerSpec("dropout", p=p)


def dense(fin, fout):
    return LayerSpec("dense", fin, fout)


def softmax():
    return LayerSpec("softmax")


def residual_add(source):
    return LayerSpec("residual_add", source=source)


# --- parameter shapes -----------------------------------------------------


def param_shapes(spec: LayerSpec) -> dict[str, tuple]:
    """Trainable tensors then buffers, in checkpoint order."""
    k, cin, cout = spec.kernel, spec.in_channels, spec.out_channels
    if spec.kind == "conv2d":
        return {"weight": (cout, cin, k, k), "bias": (cout,)}
    if spec.kind == "depthwise_conv2d":
        return {"weight": (cin, 1, k, k), "bias": (cin,)}
    if spec.kind == "pointwise_conv2d":
        return {"weight": (cout, cin), "bias": (cout,)}
    if spec.kind == "dense":
        return {"weight": (cout, cin), "bias": (cout,)}
    if spec.kind == "batchnorm":
        c = (cin,)
        return {"gamma": c, "beta": c, "running_mean": c, "running_var": c}
    return {}


BUFFERS = ("running_mean", "running_var")


def fan_in(spec: LayerSpec) -> int:
    if spec.kind == "conv2d":
        return spec.kernel * spec.kernel * spec.in_channels
    if spec.kind == "depthwise_conv2d":
        return spec.kernel * spec.kernel
    return spec.in_channels


def output_shape(spec: LayerSpec, shape: tuple, index: int, input_shapes: list) -> tuple:
    """Per-sample output shape (no batch axis); raises ShapeMismatch."""
    where = f"layer {index} ({spec.kind})"
    kind = spec.kind
    if kind in ("conv2d", "depthwise_conv2d", "pointwise_conv2d", "batchnorm", "maxpool"):
        if len(shape) != 3:
            raise shape_error(f"expected a [C, H, W] input, got {shape}", where)
    if kind in ("conv2d", "depthwise_conv2d", "pointwise_conv2d", "batchnorm") and shape[0] != spec.in_channels:
        raise shape_error(f"expected {spec.in_channels} channels, got {shape[0]}", where)
    if kind in ("conv2d", "depthwise_conv2d"):
        c, h, w = shape
        ho = (h + 2 * spec.padding - spec.kernel) // spec.stride + 1
        wo = (w + 2 * spec.padding - spec.kernel) // spec.stride + 1
        if ho < 1 or wo < 1:
            raise shape_error(f"input {h}x{w} too small for kernel {spec.kernel}", where)
        return (spec.out_channels, ho, wo)
    if kind == "pointwise_conv2d":
        return (spec.out_channels,) + tuple(shape[1:])
    if kind == "maxpool":
        c, h, w = shape
        if h < spec.pool or w < spec.pool:
            raise shape_error(f"input {h}x{w} smaller than pool {spec.pool}", where)
        return (c, h // spec.pool, w // spec.pool)
    if kind == "global_avgpool":
        if len(shape) != 3:
            raise shape_error(f"expected a [C, H, W] input, got {shape}", where)
        return (shape[0],)
    if kind == "dense":
        if len(shape) != 1 or shape[0] != spec.in_channels:
            raise shape_error(f"expected [{spec.in_channels}] features, got {shape}", where)
        return (spec.out_channels,)
    if kind == "residual_add":
        if not 0 <= spec.source <= index:
            raise config_error(f"residual source {spec.source} must precede the add", where)
        if input_shapes[spec.source] != shape:
            raise shape_error(f"skip operand {input_shapes[spec.source]} != {shape}", where)
        return shape
    return shape


def infer_shapes(specs, input_shape) -> list[tuple]:
    """Shapes of every activation: entry i is the input of layer i; last is the output."""
    shapes = [tuple(input_shape)]
    for i, spec in enumerate(specs):
        shapes.append(output_shape(spec, shapes[-1], i, shapes))
    return shapes


# --- kernels --------------------------------------------------------------
# Each forward returns (output, cache); each backward returns (dx, grads).


def _pad(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _out_hw(spec, h, w):
    return ((h + 2 * spec.padding - spec.kernel) // spec.stride + 1,
            (w + 2 * spec.padding - spec.kernel) // spec.stride + 1)


def _window(xp, i, j, s, ho, wo):
    return xp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s]


def conv_forward(spec, prm, x):
    n, c, h, w = x.shape
    k, s = spec.kernel, spec.stride
    ho, wo = _out_hw(spec, h, w)
    xp = _pad(x, spec.padding)
    cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = _window(xp, i, j, s, ho, wo)
    cols = cols.reshape(n, c * k * k, ho * wo)
    wm = prm["weight"].reshape(spec.out_channels, -1)
    out = np.matmul(wm, cols) + prm["bias"][None, :, None]
    return out.reshape(n, spec.out_channels, ho, wo), (x.shape, cols)


def conv_backward(spec, prm, cache, dy):
    xshape, cols = cache
    n, c, h, w = xshape
    k, s, p = spec.kernel, spec.stride, spec.padding
    ho, wo = dy.shape[2:]
    d = dy.reshape(n, spec.out_channels, ho * wo)
    wm = prm["weight"].reshape(spec.out_channels, -1)
    dw = np.tensordot(d, cols, axes=([0, 2], [0, 2])).reshape(prm["weight"].shape)
    db = d.sum(axis=(0, 2))
    dcols = np.matmul(wm.T, d).reshape(n, c, k, k, ho, wo)
    dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dy.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += dcols[:, :, i, j]
    dx = dxp[:, :, p:p + h, p:p + w] if p else dxp
    return dx, {"weight": dw, "bias": db}


def depthwise_forward(spec, prm, x):
    n, c, h, w = x.shape
    k, s = spec.kernel, spec.stride
    ho, wo = _out_hw(spec, h, w)
    xp = _pad(x, spec.padding)
    wt = prm["weight"]
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    out[...] = prm["bias"][None, :, None, None]
    for i in range(k):
        for j in range(k):
            out += _window(xp, i, j, s, ho, wo) * wt[None, :, 0, i, j, None, None]
    return out, (xp, x.shape)


def depthwise_backward(spec, prm, cache, dy):
    xp, xshape = cache
    n, c, h, w = xshape
    k, s, p = spec.kernel, spec.stride, spec.padding
    ho, wo = dy.shape[2:]
    wt = prm["weight"]
    dw = np.empty_like(wt)
    dxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            win = _window(xp, i, j, s, ho, wo)
            dw[:, 0, i, j] = np.einsum("nchw,nchw->c", win, dy)
            dxp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += dy * wt[None, :, 0, i, j, None, None]
    dx = dxp[:, :, p:p + h, p:p + w] if p else dxp
    return dx, {"weight": dw, "bias": dy.sum(axis=(0, 2, 3))}


def pointwise_forward(spec, prm, x):
    n, c, h, w = x.shape
    xf = x.reshape(n, c, h * w)
    out = np.matmul(prm["weight"], xf) + prm["bias"][None, :, None]
    return out.reshape(n, spec.out_channels, h, w), xf


def pointwise_backward(spec, prm, xf, dy):
    n, o, h, w = dy.shape
    d = dy.reshape(n, o, h * w)
    dw = np.tensordot(d, xf, axes=([0, 2], [0, 2]))
    dx = np.matmul(prm["weight"].T, d).reshape(n, -1, h, w)
    return dx, {"weight": dw, "bias": d.sum(axis=(0, 2))}


def batchnorm_forward(spec, prm, x, train):
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        # running statistics are buffers: updated in place during training
        prm["running_mean"][...] = BN_MOMENTUM * prm["running_mean"] + (1 - BN_MOMENTUM) * mean
        prm["running_var"][...] = BN_MOMENTUM * prm["running_var"] + (1 - BN_MOMENTUM) * var
    else:
        mean, var = prm["running_mean"], prm["running_var"]
    inv_std = (1.0 / np.sqrt(var + BN_EPS)).astype(x.dtype)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = xhat * prm["gamma"][None, :, None, None] + prm["beta"][None, :, None, None]
    return out, (xhat, inv_std, train)


def batchnorm_backward(spec, prm, cache, dy):
    xhat, inv_std, train = cache
    dgamma = np.einsum("nchw,nchw->c", dy, xhat)
    dbeta = dy.sum(axis=(0, 2, 3))
    g = (prm["gamma"] * inv_std)[None, :, None, None]
    if train:
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        dx = g * (dy - (dbeta / m)[None, :, None, None] - xhat * (dgamma / m)[None, :, None, None])
    else:
        dx = g * dy
    return dx, {"gamma": dgamma, "beta": dbeta}


def maxpool_forward(spec, x):
    n, c, h, w = x.shape
    k = spec.pool
    ho, wo = h // k, w // k
    blocks = x[:, :, :ho * k, :wo * k].reshape(n, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, ho, wo, k * k)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def maxpool_backward(spec, cache, dy):
    (n, c, h, w), idx = cache
    k = spec.pool
    ho, wo = dy.shape[2:]
    blocks = np.zeros((n, c, ho, wo, k * k), dtype=dy.dtype)
    np.put_along_axis(blocks, idx[..., None], dy[..., None], axis=-1)
    blocks = blocks.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * k, wo * k)
    dx = np.zeros((n, c, h, w), dtype=dy.dtype)
    dx[:, :, :ho * k, :wo * k] = blocks
    return dx


def softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def layer_forward(spec, prm, x, train, rng, skip=None):
    kind = spec.kind
    if kind == "conv2d":
        return conv_forward(spec, prm, x)
    if kind == "depthwise_conv2d":
        return depthwise_forward(spec, prm, x)
    if kind == "pointwise_conv2d":
        return pointwise_forward(spec, prm, x)
    if kind == "batchnorm":
        return batchnorm_forward(spec, prm, x, train)
    if kind == "relu":
        mask = x > 0
        return x * mask, mask
    if kind == "maxpool":
        return maxpool_forward(spec, x)
    if kind == "global_avgpool":
        return x.mean(axis=(2, 3)), x.shape
    if kind == "dropout":
        if not train or spec.p == 0:
            return x, None
        if rng is None:
            raise config_error("dropout in train mode needs a random generator")
        keep = (rng.random(x.shape) >= spec.p).astype(x.dtype) / x.dtype.type(1.0 - spec.p)
        return x * keep, keep
    if kind == "dense":
        return x @ prm["weight"].T + prm["bias"], x
    if kind == "softmax":
        y = softmax_rows(x)
        return y, y
    if kind == "residual_add":
        return x + skip, None
    raise config_error(f"no kernel for {kind!r}")


def layer_backward(spec, prm, cache, dy):
    kind = spec.kind
    if kind == "conv2d":
        return conv_backward(spec, prm, cache, dy)
    if kind == "depthwise_conv2d":
        return depthwise_backward(spec, prm, cache, dy)
    if kind == "pointwise_conv2d":
        return pointwise_backward(spec, prm, cache, dy)
    if kind == "batchnorm":
        return batchnorm_backward(spec, prm, cache, dy)
    if kind == "relu":
        return dy * cache, {}
    if kind == "maxpool":
        return maxpool_backward(spec, cache, dy), {}
    if kind == "global_avgpool":
        n, c, h, w = cache
        return np.broadcast_to((dy / (h * w))[:, :, None, None], cache).copy(), {}
    if kind == "dropout":
        return (dy if cache is None else dy * cache), {}
    if kind == "dense":
        return dy @ prm["weight"], {"weight": dy.T @ cache, "bias": dy.sum(axis=0)}
    if kind == "softmax":
        y = cache
        return y * (dy - (dy * y).sum(axis=1, keepdims=True)), {}
    if kind == "residual_add":
        return dy, {}
    raise config_error(f"no kernel for {kind!r}")
