"""Audio-visual road surface classification with weighted late fusion."""

from .core import ClassDistribution, ErrorKind, PipelineError, Prediction, RoadCondition, argmax_label, normalize

__version__ = "0.1.0"

__all__ = [
    "ClassDistribution", "ErrorKind", "PipelineError", "Prediction", "RoadCondition",
    "argmax_label", "normalize",
]
