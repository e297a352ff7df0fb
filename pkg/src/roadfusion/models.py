"""Desk-scale MobileNet / YAMNet-style classifiers and unimodal training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .core import ClassDistribution, Prediction, config_error, numeric_error, shape_error
from .nn import checkpoint
from .nn.layers import LayerSpec, infer_shapes

ARCHITECTURES = ("mobilenet_base", "mobilenet_improved", "yamnet_base", "yamnet_improved")
IMAGE_SHAPE = (3, 96, 96)
AUDIO_SHAPE = (1, 98, 64)
STEM_CHANNELS = 8
# (out_channels, stride) per depthwise-separable block
SEPARABLE_BLOCKS = ((16, 1), (32, 2), (32, 1), (64, 2))
HEAD_CHANNELS = 64
DROPOUT_P = 0.5
VALIDATION_FRACTION = 0.2


def modality_of(arch: str) -> str:
    if arch not in ARCHITECTURES:
        raise config_error(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
    return "image" if arch.startswith("mobilenet") else "audio"


def is_improved(arch: str) -> bool:
    return arch.endswith("_improved")


def _backbone(in_channels: int) -> list[LayerSpec]:
    layers = [nn.conv2d(in_channels, STEM_CHANNELS, 3, 2, 1), nn.batchnorm(STEM_CHANNELS), nn.relu()]
    c = STEM_CHANNELS
    for out, stride in SEPARABLE_BLOCKS:
        layers += [
            nn.depthwise(c, 3, stride, 1), nn.batchnorm(c), nn.relu(),
            nn.pointwise(c, out), nn.batchnorm(out), nn.relu(),
        ]
        c = out
    return layers


def build_architecture(arch: str, input_shape=None) -> list[LayerSpec]:
    """LayerSpec sequence for one of the four architecture ids.

    Improved variants append their extra layers to the unchanged base
    backbone, so the base backbone is always a prefix of the improved spec.
    """
    modality = modality_of(arch)
    expected = IMAGE_SHAPE if modality == "image" else AUDIO_SHAPE
    if input_shape is None:
        input_shape = expected
    input_shape = tuple(input_shape)
    if len(input_shape) != 3 or input_shape[0] != expected[0]:
        raise config_error(f"{arch} expects a {expected[0]}-channel [C, H, W] input, got {input_shape}")
    layers = _backbone(input_shape[0])
    c = SEPARABLE_BLOCKS[-1][0]
    if not is_improved(arch):
        layers += [nn.global_avgpool(), nn.dense(c, 3)]
    elif modality == "image":
        layers += [
            nn.conv2d(c, HEAD_CHANNELS), nn.batchnorm(HEAD_CHANNELS), nn.relu(), nn.maxpool(2),
            nn.conv2d(HEAD_CHANNELS, HEAD_CHANNELS), nn.relu(),
            nn.global_avgpool(), nn.dropout(DROPOUT_P), nn.dense(HEAD_CHANNELS, 3),
        ]
    else:
        for _ in range(3):
            start = len(layers)
            layers += [nn.conv2d(c, HEAD_CHANNELS), nn.batchnorm(HEAD_CHANNELS), nn.relu(),
                       nn.residual_add(start)]
            c = HEAD_CHANNELS
        layers += [nn.global_avgpool(), nn.dropout(DROPOUT_P), nn.dense(HEAD_CHANNELS, 3)]
    layers.append(nn.softmax())
    try:
        infer_shapes(layers, input_shape)
    except Exception as exc:
        raise config_error(f"{arch} cannot run on input {input_shape}: {exc}") from None
    return layers


def backbone_length() -> int:
    return len(_backbone(1))


def separable_blocks(specs) -> list[tuple[LayerSpec, LayerSpec]]:
    """(depthwise, pointwise) pairs in order of appearance."""
    pairs = []
    for i, s in enumerate(specs):
        if s.kind == "depthwise_conv2d":
            nxt = next((t for t in specs[i + 1:] if t.kind == "pointwise_conv2d"), None)
            if nxt is not None:
                pairs.append((s, nxt))
    return pairs


def standard_equivalent(dw: LayerSpec, pw: LayerSpec) -> LayerSpec:
    """The single standard convolution a depthwise-separable pair replaces."""
    return nn.conv2d(dw.in_channels, pw.out_channels, dw.kernel, dw.stride, dw.padding)


def all_standard_equivalent(specs) -> list[LayerSpec]:
    """Same channel plan with every separable pair replaced by a standard conv."""
    out = []
    skip_next_pw = False
    for i, s in enumerate(specs):
        if s.kind == "depthwise_conv2d":
            pw = next(t for t in specs[i + 1:] if t.kind == "pointwise_conv2d")
            out.append(standard_equivalent(s, pw))
            skip_next_pw = True
        elif s.kind == "pointwise_conv2d" and skip_next_pw:
            skip_next_pw = False
        elif s.kind == "batchnorm" and skip_next_pw:
            # the depthwise stage's own batch norm disappears with it
            continue
        else:
            out.append(s)
    return out


# --- training -------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise config_error(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise config_error(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise config_error(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "adam"):
            raise config_error(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size,
                "learning_rate": self.learning_rate, "optimizer": self.optimizer, "seed": self.seed}


@dataclass
class TrainedModel:
    arch: str
    specs: list[LayerSpec]
    params: nn.ModelParams
    input_shape: tuple
    history: list[dict] = field(default_factory=list)

    @property
    def modality(self) -> str:
        return modality_of(self.arch)

    def check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        if x.shape == self.input_shape:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise shape_error(
                f"{self.arch} expects {self.modality} input {self.input_shape}, got {x.shape}")
        return x

    def predict_proba(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        x = self.check_input(x)
        out = [nn.predict_proba(self.specs, self.params, x[i:i + batch_size])
               for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def header(self) -> dict:
        return {
            "kind": "unimodal",
            "arch": self.arch,
            "modality": self.modality,
            "input_shape": list(self.input_shape),
            "spec": [s.to_dict() for s in self.specs],
            "seed": self.params.seed,
            "history": self.history,
        }

    def tensor_list(self) -> list[tuple[str, np.ndarray]]:
        return list(self.params.tensors.items())

    def to_bytes(self) -> bytes:
        return checkpoint.encode(self.header(), self.tensor_list())

    @classmethod
    def from_parts(cls, header: dict, tensors) -> "TrainedModel":
        if header.get("kind") != "unimodal":
            raise config_error(f"expected a unimodal checkpoint, got kind {header.get('kind')!r}")
        specs = nn.as_specs(header["spec"])
        params = nn.ModelParams(dict(tensors), header.get("seed", 0))
        return cls(header["arch"], specs, params, tuple(header["input_shape"]), header.get("history", []))

    @classmethod
    def from_bytes(cls, data: bytes) -> "TrainedModel":
        return cls.from_parts(*checkpoint.decode(data))


def predict(model: TrainedModel, x: np.ndarray, sample_id: str = "") -> Prediction:
    probs = model.predict_proba(x)
    if probs.shape[0] != 1:
        raise shape_error("predict takes exactly one sample")
    return Prediction(ClassDistribution.from_array(probs[0]), sample_id)


def stratified_holdout(labels: np.ndarray, fraction: float, seed: int):
    """Index arrays (fit, holdout), holding out ``fraction`` of each class."""
    rng = np.random.Generator(np.random.Philox(seed))
    fit, hold = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        k = int(round(fraction * len(idx)))
        if fraction > 0 and len(idx) > 1:
            k = min(max(k, 1), len(idx) - 1)
        else:
            k = min(k, len(idx) - 1)
        hold.extend(idx[:k])
        fit.extend(idx[k:])
    return np.sort(np.array(fit, dtype=np.int64)), np.sort(np.array(hold, dtype=np.int64))


def accuracy(model: TrainedModel, x: np.ndarray, y: np.ndarray) -> float:
    if len(x) == 0:
        return float("nan")
    return float((model.predict_proba(x).argmax(axis=1) == y).mean())


def train_unimodal(arch: str, x: np.ndarray, y: np.ndarray, cfg: TrainConfig,
                   validation_fraction: float = VALIDATION_FRACTION, log=None) -> TrainedModel:
    """Mini-batch training with a seeded, stratified validation holdout.

    ``x`` is ``[N, C, H, W]`` float32; ``y`` holds class codes. History
    records mean training loss and holdout accuracy per epoch.
    """
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise config_error("training data is empty")
    if len(x) != len(y):
        raise config_error(f"{len(x)} samples but {len(y)} labels")
    if np.any((y < 0) | (y > 2)):
        raise config_error("labels must be class codes 0..2")
    specs = build_architecture(arch, x.shape[1:])
    fit_idx, val_idx = stratified_holdout(y, validation_fraction, cfg.seed)
    if cfg.batch_size > len(fit_idx):
        raise config_error(f"batch_size {cfg.batch_size} exceeds {len(fit_idx)} training samples")
    params = nn.init_params(specs, cfg.seed)
    model = TrainedModel(arch, specs, params, tuple(x.shape[1:]))
    opt = nn.make_optimizer(cfg.optimizer, cfg.learning_rate)
    shuffle_rng = np.random.Generator(np.random.Philox([cfg.seed, 1]))
    dropout_rng = np.random.Generator(np.random.Philox([cfg.seed, 2]))
    for epoch in range(1, cfg.epochs + 1):
        order = fit_idx[shuffle_rng.permutation(len(fit_idx))]
        losses, seen = [], 0
        for b in range(0, len(order), cfg.batch_size):
            batch = order[b:b + cfg.batch_size]
            if len(batch) < 2 and len(order) > 1:
                # a singleton batch has no batch-norm variance
                continue
            loss, grads = nn.backward(specs, params, x[batch], y[batch], dropout_rng)
            if not np.isfinite(loss):
                raise numeric_error("training diverged: non-finite loss", f"epoch {epoch}")
            losses.append(loss * len(batch))
            seen += len(batch)
            opt.step(params, grads)
        mean_loss = float(np.sum(losses) / seen)
        val_acc = accuracy(model, x[val_idx], y[val_idx]) if len(val_idx) else None
        model.history.append({"epoch": epoch, "loss": mean_loss, "val_accuracy": val_acc})
        if log is not None:
            log(f"{arch} epoch {epoch}/{cfg.epochs} loss={mean_loss:.4f} val_acc={val_acc}")
    return model
