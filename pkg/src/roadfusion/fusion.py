"""Weighted decision-level fusion of the image and audio classifiers.

The fused distribution is the convex combination
``w_image * p_image + w_audio * p_audio``. Weights start at 0.6/0.4 and
move toward accuracy-proportional targets by an exponential moving average
once per epoch over the validation set; the unimodal models stay frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import ClassDistribution, Prediction, config_error, shape_error
from .models import TrainedModel
from .nn import checkpoint

INITIAL_IMAGE_WEIGHT = 0.6
DEFAULT_ETA = 0.3


@dataclass(frozen=True)
class FusionState:
    w_image: float = INITIAL_IMAGE_WEIGHT
    w_audio: float = 1.0 - INITIAL_IMAGE_WEIGHT
    eta: float = DEFAULT_ETA
    history: tuple = ()

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise config_error(f"smoothing eta must be in (0, 1], got {self.eta}")
        if self.w_image < 0 or self.w_audio < 0 or abs(self.w_image + self.w_audio - 1.0) > 1e-12:
            raise config_error(f"fusion weights ({self.w_image}, {self.w_audio}) are not on the simplex")

    @property
    def weights(self) -> tuple[float, float]:
        return self.w_image, self.w_audio

    def to_json(self) -> dict:
        return {"w_image": self.w_image, "w_audio": self.w_audio, "eta": self.eta,
                "history": [dict(h) for h in self.history]}

    @classmethod
    def from_json(cls, obj: dict) -> "FusionState":
        return cls(float(obj["w_image"]), float(obj["w_audio"]), float(obj.get("eta", DEFAULT_ETA)),
                   tuple(obj.get("history", ())))


def init_fusion(w_image: float = INITIAL_IMAGE_WEIGHT, eta: float = DEFAULT_ETA) -> FusionState:
    if not 0.0 <= w_image <= 1.0:
        raise config_error(f"initial image weight {w_image} outside [0, 1]")
    return FusionState(w_image, 1.0 - w_image, eta)


def fuse_arrays(p_image: np.ndarray, p_audio: np.ndarray, state: FusionState) -> np.ndarray:
    """Row-wise convex combination; rows where both inputs agree pass through unchanged."""
    p_image = np.asarray(p_image, dtype=np.float64)
    p_audio = np.asarray(p_audio, dtype=np.float64)
    if p_image.shape != p_audio.shape:
        raise shape_error(f"image probabilities {p_image.shape} vs audio {p_audio.shape}")
    mixed = state.w_image * p_image + state.w_audio * p_audio
    return np.where(p_image == p_audio, p_image, mixed)


def fuse(p_image: ClassDistribution, p_audio: ClassDistribution, state: FusionState) -> ClassDistribution:
    out = fuse_arrays(p_image.as_array(), p_audio.as_array(), state)
    return ClassDistribution(tuple(out))


def update_weights(state: FusionState, image_accuracy: float, audio_accuracy: float,
                   epoch: int, **extra) -> FusionState:
    for name, acc in (("image", image_accuracy), ("audio", audio_accuracy)):
        if not 0.0 <= acc <= 1.0:
            raise config_error(f"{name} accuracy {acc} outside [0, 1]")
    total = image_accuracy + audio_accuracy
    target = image_accuracy / total if total > 0 else state.w_image
    w_image = (1.0 - state.eta) * state.w_image + state.eta * target
    w_image = min(1.0, max(0.0, w_image))
    entry = {"epoch": int(epoch), "w_image": w_image, "w_audio": 1.0 - w_image,
             "image_accuracy": float(image_accuracy), "audio_accuracy": float(audio_accuracy)}
    entry.update(extra)
    return replace(state, w_image=w_image, w_audio=1.0 - w_image, history=state.history + (entry,))


def fused_cross_entropy(p_fused: np.ndarray, labels: np.ndarray) -> float:
    picked = p_fused[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, 1e-12)).mean())


@dataclass
class MultimodalClassifier:
    image_model: TrainedModel
    audio_model: TrainedModel
    fusion: FusionState = field(default_factory=init_fusion)

    def __post_init__(self):
        if self.image_model.modality != "image" or self.audio_model.modality != "audio":
            raise config_error("need an image model and an audio model")

    @property
    def name(self) -> str:
        return f"{self.image_model.arch}+{self.audio_model.arch}"

    def unimodal_proba(self, images, spectrograms) -> tuple[np.ndarray, np.ndarray]:
        if images is None or spectrograms is None:
            raise shape_error("both an image and an audio input are required")
        p_img = self.image_model.predict_proba(images)
        p_aud = self.audio_model.predict_proba(spectrograms)
        if len(p_img) != len(p_aud):
            raise shape_error(f"{len(p_img)} images but {len(p_aud)} audio inputs")
        return p_img, p_aud

    def predict_proba(self, images, spectrograms) -> np.ndarray:
        return fuse_arrays(*self.unimodal_proba(images, spectrograms), self.fusion)

    def to_bytes(self) -> bytes:
        header = {
            "kind": "multimodal",
            "fusion": self.fusion.to_json(),
            "image": self.image_model.header(),
            "audio": self.audio_model.header(),
        }
        tensors = [(f"image/{k}", v) for k, v in self.image_model.tensor_list()]
        tensors += [(f"audio/{k}", v) for k, v in self.audio_model.tensor_list()]
        return checkpoint.encode(header, tensors)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MultimodalClassifier":
        header, tensors = checkpoint.decode(data)
        if header.get("kind") != "multimodal":
            raise config_error(f"expected a multimodal checkpoint, got kind {header.get('kind')!r}")
        parts = {"image": [], "audio": []}
        for name, arr in tensors:
            role, _, key = name.partition("/")
            parts[role].append((key, arr))
        image = TrainedModel.from_parts(header["image"], parts["image"])
        audio = TrainedModel.from_parts(header["audio"], parts["audio"])
        return cls(image, audio, FusionState.from_json(header["fusion"]))


def train_multimodal(image_model: TrainedModel, audio_model: TrainedModel,
                     val_images: np.ndarray, val_spectrograms: np.ndarray, val_labels: np.ndarray,
                     epochs: int, state: FusionState | None = None, log=None) -> MultimodalClassifier:
    """Adapt the fusion weights on a paired validation set.

    Each epoch: unimodal validation accuracies, fused predictions and their
    mean cross-entropy (recorded, never back-propagated), then one weight
    update. The unimodal models are frozen, so their predictions are
    computed once.
    """
    labels = np.asarray(val_labels, dtype=np.int64)
    if len(labels) == 0:
        raise config_error("validation set is empty")
    if epochs < 1:
        raise config_error(f"epochs must be >= 1, got {epochs}")
    clf = MultimodalClassifier(image_model, audio_model, state or init_fusion())
    p_img, p_aud = clf.unimodal_proba(val_images, val_spectrograms)
    if len(p_img) != len(labels):
        raise shape_error(f"{len(p_img)} validation inputs but {len(labels)} labels")
    acc_img = float((p_img.argmax(1) == labels).mean())
    acc_aud = float((p_aud.argmax(1) == labels).mean())
    fusion = clf.fusion
    for epoch in range(1, epochs + 1):
        fused = fuse_arrays(p_img, p_aud, fusion)
        loss = fused_cross_entropy(fused, labels)
        fused_acc = float((fused.argmax(1) == labels).mean())
        fusion = update_weights(fusion, acc_img, acc_aud, epoch,
                                fused_loss=loss, fused_accuracy=fused_acc)
        if log is not None:
            log(f"fusion epoch {epoch}/{epochs} loss={loss:.4f} acc={fused_acc:.4f} "
                f"w=({fusion.w_image:.4f}, {fusion.w_audio:.4f})")
    clf.fusion = fusion
    return clf


def predict_multimodal(clf: MultimodalClassifier, image, spectrogram, sample_id: str = "") -> Prediction:
    if image is None or spectrogram is None:
        raise shape_error("both an image and an audio input are required")
    probs = clf.predict_proba(image, spectrogram)
    if probs.shape[0] != 1:
        raise shape_error("predict_multimodal takes exactly one pair")
    return Prediction(ClassDistribution.from_array(probs[0]), sample_id)
