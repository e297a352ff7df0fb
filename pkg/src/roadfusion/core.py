"""Shared vocabulary: road-condition labels, class distributions, errors."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

NUM_CLASSES = 3
_SUM_TOL = 1e-9


class ErrorKind(str, enum.Enum):
    DECODE = "DecodeError"
    SHAPE = "ShapeMismatch"
    CONFIG = "InvalidConfig"
    NUMERIC = "NumericError"
    IO = "IoError"
    EMPTY = "EmptyInput"


class PipelineError(Exception):
    """Every failure in the pipeline is reported through one of these.

    ``kind`` is an :class:`ErrorKind`; ``context`` names where it happened
    (a file path, a layer index, an epoch) and may be empty.
    """

    def __init__(self, kind: ErrorKind, message: str, context: str = ""):
        self.kind = ErrorKind(kind)
        self.message = message
        self.context = context
        text = f"{self.kind.value}: {message}"
        if context:
            text += f" [{context}]"
        super().__init__(text)


def decode_error(message, context=""):
    return PipelineError(ErrorKind.DECODE, message, context)


def shape_error(message, context=""):
    return PipelineError(ErrorKind.SHAPE, message, context)


def config_error(message, context=""):
    return PipelineError(ErrorKind.CONFIG, message, context)


def numeric_error(message, context=""):
    return PipelineError(ErrorKind.NUMERIC, message, context)


def io_error(message, context=""):
    return PipelineError(ErrorKind.IO, message, context)


def empty_error(message, context=""):
    return PipelineError(ErrorKind.EMPTY, message, context)


class RoadCondition(enum.IntEnum):
    DRY = 0
    WET = 1
    SNOW = 2

    @classmethod
    def from_code(cls, code: int) -> "RoadCondition":
        return cls(int(code))

    def to_code(self) -> int:
        return int(self)

    @classmethod
    def parse(cls, name: str) -> "RoadCondition":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise decode_error(f"unknown road condition {name!r}") from None

    @property
    def label(self) -> str:
        """Lowercase wire name used in every file format."""
        return self.name.lower()


@dataclass(frozen=True)
class ClassDistribution:
    probs: tuple[float, float, float]

    def __post_init__(self):
        p = tuple(float(x) for x in self.probs)
        if len(p) != NUM_CLASSES:
            raise shape_error(f"expected {NUM_CLASSES} probabilities, got {len(p)}")
        if not all(np.isfinite(p)):
            raise numeric_error(f"non-finite probability in {p}")
        if any(x < 0.0 or x > 1.0 for x in p):
            raise numeric_error(f"probability outside [0, 1] in {p}")
        if abs(sum(p) - 1.0) > _SUM_TOL:
            raise numeric_error(f"probabilities sum to {sum(p)!r}, not 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_array(cls, arr) -> "ClassDistribution":
        """Wrap a softmax/fusion output, absorbing float32 rounding.

        The array is clipped to [0, 1] and renormalised in float64 so the
        strict sum tolerance holds; values are otherwise unchanged.
        """
        a = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
        s = a.sum()
        if not np.isfinite(s) or s <= 0:
            raise numeric_error(f"cannot form a distribution from {a}")
        return cls(tuple(a / s))

    def as_array(self) -> np.ndarray:
        return np.array(self.probs, dtype=np.float64)


def argmax_label(d: ClassDistribution) -> RoadCondition:
    # np.argmax returns the first maximum, i.e. the lowest code on ties
    return RoadCondition(int(np.argmax(d.probs)))


def normalize(raw) -> ClassDistribution:
    a = np.asarray(raw, dtype=np.float64)
    if a.shape != (NUM_CLASSES,):
        raise shape_error(f"expected {NUM_CLASSES} entries, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise numeric_error(f"entries must be finite and non-negative: {a}")
    total = a.sum()
    if total == 0:
        raise numeric_error("cannot normalize an all-zero vector")
    return ClassDistribution(tuple(a / total))


@dataclass(frozen=True)
class Prediction:
    distribution: ClassDistribution
    sample_id: str = ""

    @property
    def label(self) -> RoadCondition:
        return argmax_label(self.distribution)

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "label": self.label.label,
            "probs": list(self.distribution.probs),
        }
