"""Accuracy / macro precision-recall-F1 reports, ablation table, corruption benchmark."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import audio, vision
from .core import NUM_CLASSES, RoadCondition, config_error, empty_error
from .fusion import MultimodalClassifier, fuse_arrays

AVERAGING = "macro"
# image arch, audio arch, display name; rows in the published ablation order
ABLATION_ROWS = (
    ("mobilenet_base", "yamnet_base", "MobileNet+YAMNet"),
    ("mobilenet_improved", "yamnet_base", "IMobileNet+YAMNet"),
    ("mobilenet_base", "yamnet_improved", "MobileNet+IYAMNet"),
    ("mobilenet_improved", "yamnet_improved", "IMobileNet+IYAMNet"),
)
DEFAULT_SEVERITIES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_AUDIO_NOISE = (0.0, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted class

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionMatrix":
        m = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
        np.add.at(m, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
        return cls(m)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    model: str
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    precision: tuple
    recall: tuple
    f1: tuple
    confusion: ConfusionMatrix

    def to_json(self) -> dict:
        r4 = lambda v: round(float(v), 4)  # noqa: E731
        return {
            "model": self.model,
            "averaging": AVERAGING,
            "accuracy": r4(self.accuracy),
            "precision": r4(self.macro_precision),
            "recall": r4(self.macro_recall),
            "f1": r4(self.macro_f1),
            "per_class": {
                c.label: {"precision": r4(self.precision[c]), "recall": r4(self.recall[c]), "f1": r4(self.f1[c])}
                for c in RoadCondition
            },
            "confusion": self.confusion.counts.tolist(),
        }


def metrics_from_confusion(cm: ConfusionMatrix, model: str = "") -> MetricsReport:
    m = cm.counts.astype(np.float64)
    if cm.total == 0:
        raise empty_error("no predictions to score")
    tp = np.diag(m)
    predicted = m.sum(axis=0)
    actual = m.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros(NUM_CLASSES), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros(NUM_CLASSES), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(NUM_CLASSES), where=denom > 0)
    return MetricsReport(
        model=model,
        accuracy=float(tp.sum() / m.sum()),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        confusion=cm,
    )


def metrics_from_labels(y_true, y_pred, model: str = "") -> MetricsReport:
    if len(y_true) == 0:
        raise empty_error("no predictions to score")
    return metrics_from_confusion(ConfusionMatrix.from_labels(y_true, y_pred), model)


def compute_metrics(pairs, model: str = "") -> MetricsReport:
    """Metrics over ``(Prediction, true RoadCondition)`` pairs."""
    pairs = list(pairs)
    if not pairs:
        raise empty_error("no predictions to score")
    y_true = [int(t) for _, t in pairs]
    y_pred = [int(p.label) for p, _ in pairs]
    return metrics_from_labels(y_true, y_pred, model)


# --- rendering ------------------------------------------------------------

_COLUMNS = ("Accuracy", "Precision", "Recall", "F1-score")


def render_table(reports, title: str = "") -> str:
    width = max([len("Model")] + [len(r.model) for r in reports])
    lines = []
    if title:
        lines.append(title)
    lines.append(f"averaging: {AVERAGING}")
    lines.append(f"{'Model':<{width}}  " + "  ".join(f"{c:>9}" for c in _COLUMNS))
    for r in reports:
        vals = (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1)
        lines.append(f"{r.model:<{width}}  " + "  ".join(f"{v:>9.4f}" for v in vals))
    return "\n".join(lines) + "\n"


def ablation_report(results: dict) -> tuple[list[MetricsReport], dict, str]:
    """Order four combination reports in table row order.

    ``results`` maps ``(image_arch, audio_arch)`` to a :class:`MetricsReport`.
    Returns the ordered rows, their JSON form and the aligned text table.
    """
    rows = []
    for image_arch, audio_arch, name in ABLATION_ROWS:
        if (image_arch, audio_arch) not in results:
            raise config_error(f"ablation needs the {name} combination ({image_arch} + {audio_arch})")
        rep = results[(image_arch, audio_arch)]
        rows.append(MetricsReport(name, rep.accuracy, rep.macro_precision, rep.macro_recall,
                                  rep.macro_f1, rep.precision, rep.recall, rep.f1, rep.confusion))
    as_json = {"averaging": AVERAGING, "rows": [r.to_json() for r in rows]}
    return rows, as_json, render_table(rows, "Multimodal ablation")


def evaluate_classifier(clf: MultimodalClassifier, images, spectrograms, labels) -> dict:
    """Image-only, audio-only and fused reports on one test set."""
    p_img, p_aud = clf.unimodal_proba(images, spectrograms)
    fused = fuse_arrays(p_img, p_aud, clf.fusion)
    return {
        "image": metrics_from_labels(labels, p_img.argmax(1), clf.image_model.arch),
        "audio": metrics_from_labels(labels, p_aud.argmax(1), clf.audio_model.arch),
        "fused": metrics_from_labels(labels, fused.argmax(1), clf.name),
    }


# --- corruption benchmark -------------------------------------------------


def corruption_benchmark(clf: MultimodalClassifier, images: list[vision.Image], frames: list[np.ndarray],
                         labels, image_cfg: vision.ImageConfig | None = None,
                         spec_cfg: audio.SpectrogramConfig | None = None,
                         kinds=vision.CORRUPTIONS, severities=DEFAULT_SEVERITIES,
                         audio_noise=DEFAULT_AUDIO_NOISE, seed: int = 0) -> dict:
    """Accuracy of each branch and of the fusion under corrupted inputs.

    Image corruptions leave the audio untouched and vice versa, so the
    unaffected branch is computed once per benchmark.
    """
    image_cfg = image_cfg or vision.ImageConfig()
    spec_cfg = spec_cfg or audio.SpectrogramConfig()
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise empty_error("corruption benchmark needs test samples")

    def image_batch(kind, severity):
        return np.stack([
            vision.image_to_tensor(vision.corrupt(img, kind, severity, seed + i), image_cfg)
            for i, img in enumerate(images)])

    def audio_batch(level):
        return np.stack([
            audio.mel_spectrogram(audio.add_noise(f, level, seed + i), spec_cfg).values[None].astype(np.float32)
            for i, f in enumerate(frames)])

    def cell(p_img, p_aud, **info):
        fused = fuse_arrays(p_img, p_aud, clf.fusion)
        acc = lambda p: float((p.argmax(1) == labels).mean())  # noqa: E731
        return dict(info, image_accuracy=acc(p_img), audio_accuracy=acc(p_aud), fused_accuracy=acc(fused))

    clean_img = clf.image_model.predict_proba(image_batch(kinds[0], 0.0))
    clean_aud = clf.audio_model.predict_proba(audio_batch(0.0))
    cells = [cell(clean_img, clean_aud, modality="none", kind="clean", severity=0.0)]
    for kind in kinds:
        for s in severities:
            p_img = clean_img if s == 0 else clf.image_model.predict_proba(image_batch(kind, s))
            cells.append(cell(p_img, clean_aud, modality="image", kind=kind, severity=float(s)))
    for level in audio_noise:
        p_aud = clean_aud if level == 0 else clf.audio_model.predict_proba(audio_batch(level))
        cells.append(cell(clean_img, p_aud, modality="audio", kind="noise", severity=float(level)))
    return {"model": clf.name, "w_image": clf.fusion.w_image, "w_audio": clf.fusion.w_audio, "cells": cells}


def first_failing_severity(report: dict, kind: str, threshold: float = 0.6):
    """First image-corruption cell of ``kind`` whose image-only accuracy is below ``threshold``."""
    for c in report["cells"]:
        if c["modality"] == "image" and c["kind"] == kind and c["image_accuracy"] < threshold:
            return c
    return None


def render_corruption(report: dict) -> str:
    lines = [f"Corruption benchmark: {report['model']} "
             f"(w_image={report['w_image']:.4f}, w_audio={report['w_audio']:.4f})",
             f"{'modality':<9} {'kind':<10} {'severity':>8} {'image':>8} {'audio':>8} {'fused':>8}"]
    for c in report["cells"]:
        lines.append(f"{c['modality']:<9} {c['kind']:<10} {c['severity']:>8.2f} {c['image_accuracy']:>8.4f} "
                     f"{c['audio_accuracy']:>8.4f} {c['fused_accuracy']:>8.4f}")
    return "\n".join(lines) + "\n"


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
