"""JSON run configuration with strict key checking."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import audio, vision
from .core import config_error, io_error
from .fusion import DEFAULT_ETA, INITIAL_IMAGE_WEIGHT
from .models import TrainConfig

CACHE_ENV = "SMARTRSD_CACHE_DIR"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SpectrogramSection(_Section):
    window_length: int = 400
    hop_length: int = 160
    fft_size: int = 512
    mel_bins: int = 64
    freq_min: float = 125.0
    freq_max: float = 7500.0
    log_floor: float = 1e-6


class ImageSection(_Section):
    target_size: int = 96
    mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: tuple[float, float, float] = (0.5, 0.5, 0.5)


class ArchitectureSection(_Section):
    image: Literal["mobilenet_base", "mobilenet_improved"] = "mobilenet_improved"
    audio: Literal["yamnet_base", "yamnet_improved"] = "yamnet_improved"


class TrainSection(_Section):
    epochs: int = Field(10, ge=1)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    optimizer: Literal["sgd", "adam"] = "adam"
    seed: int = 0


class FusionSection(_Section):
    eta: float = Field(DEFAULT_ETA, gt=0, le=1)
    w_image: float = Field(INITIAL_IMAGE_WEIGHT, ge=0, le=1)
    w_audio: float = Field(1.0 - INITIAL_IMAGE_WEIGHT, ge=0, le=1)
    epochs: int = Field(10, ge=1)


class PathsSection(_Section):
    cache_dir: Optional[str] = None


class RunConfig(_Section):
    spectrogram: SpectrogramSection = SpectrogramSection()
    image: ImageSection = ImageSection()
    architecture: ArchitectureSection = ArchitectureSection()
    train: TrainSection = TrainSection()
    fusion: FusionSection = FusionSection()
    paths: PathsSection = PathsSection()

    def spectrogram_config(self) -> audio.SpectrogramConfig:
        return audio.SpectrogramConfig(**self.spectrogram.model_dump())

    def image_config(self) -> vision.ImageConfig:
        d = self.image.model_dump()
        return vision.ImageConfig(d["target_size"], tuple(d["mean"]), tuple(d["std"]))

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train.model_dump())

    def materialized(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        blob = json.dumps(self.materialized(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def cache_dir(self, manifest_dir) -> Path:
        env = os.environ.get(CACHE_ENV)
        if env:
            return Path(env)
        if self.paths.cache_dir:
            return Path(self.paths.cache_dir)
        return Path(manifest_dir) / ".spectrogram_cache"


def _validated(data: dict, where: str) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors())
        raise config_error(problems, where) from None
    if abs(cfg.fusion.w_image + cfg.fusion.w_audio - 1.0) > 1e-12:
        raise config_error("fusion.w_image + fusion.w_audio must equal 1", where)
    # run the domain-level checks too (e.g. window <= fft size)
    cfg.spectrogram_config()
    cfg.image_config()
    return cfg


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the JSON file, then ``{"section": {"key": value}}`` overrides."""
    data: dict = {}
    where = str(path) if path else "<defaults>"
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise io_error(str(exc), where) from None
        except json.JSONDecodeError as exc:
            raise config_error(f"config is not valid JSON: {exc}", where) from None
        if not isinstance(data, dict):
            raise config_error("config must be a JSON object", where)
    for section, values in (overrides or {}).items():
        values = {k: v for k, v in values.items() if v is not None}
        if values:
            data.setdefault(section, {}).update(values)
    return _validated(data, where)
