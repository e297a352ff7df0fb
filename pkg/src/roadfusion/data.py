"""Synthetic paired corpus, JSON-lines manifests, splits and spectrogram cache.

Randomness comes from numpy's Philox4x64 counter-based generator keyed
by ``(seed, class code, sample index, stream)``, so every sample can be
regenerated independently and in any order.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import audio, vision
from .core import RoadCondition, config_error, decode_error, io_error

SPLITS = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.7, 0.1, 0.2)
MANIFEST_NAME = "manifest.jsonl"


@dataclass(frozen=True)
class ClassSignature:
    """Per-class generator parameters (audio then image)."""

    tilt_db_per_octave: float  # spectral slope of the noise bed
    hiss_db: float  # extra gain above 2 kHz
    lowpass_hz: float  # 0 disables
    am_rate_hz: float  # amplitude-modulation rate, 0 disables
    am_depth: float
    pulse_rate_hz: float  # crunch pulses per second, 0 disables
    base_gray: float
    texture_contrast: float
    streaks: int  # bright specular streaks per image
    tint: tuple[float, float, float] = (0.0, 0.0, 0.0)


DEFAULT_SIGNATURES = {
    RoadCondition.DRY: ClassSignature(-3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.45, 0.12, 0),
    RoadCondition.WET: ClassSignature(-1.0, 4.0, 0.0, 5.0, 0.25, 0.0, 0.30, 0.08, 4),
    RoadCondition.SNOW: ClassSignature(-3.5, 0.0, 2500.0, 0.0, 0.0, 7.0, 0.78, 0.04, 0, (-0.02, 0.0, 0.03)),
}


@dataclass(frozen=True)
class GeneratorConfig:
    per_class: int = 100
    seed: int = 0
    image_size: int = 96
    clip_seconds: float = 1.0
    gain_db: float = 6.0
    brightness_jitter: float = 0.15
    tilt_jitter: float = 2.0
    signatures: dict = field(default_factory=lambda: dict(DEFAULT_SIGNATURES))

    def __post_init__(self):
        if self.per_class < 1:
            raise config_error("per_class must be >= 1")
        if self.image_size < 8:
            raise config_error("image_size must be >= 8")
        if self.clip_seconds <= 0:
            raise config_error("clip_seconds must be positive")


@dataclass(frozen=True)
class SampleRecord:
    id: str
    image_path: str
    audio_path: str
    label: RoadCondition
    split: str = "train"

    def to_json(self) -> dict:
        return {"id": self.id, "image_path": self.image_path, "audio_path": self.audio_path,
                "label": self.label.label, "split": self.split}


@dataclass
class DatasetManifest:
    records: list[SampleRecord]
    root: Path = Path(".")

    def class_counts(self) -> dict[str, dict[str, int]]:
        counts = {s: {c.label: 0 for c in RoadCondition} for s in SPLITS}
        for r in self.records:
            counts[r.split][r.label.label] += 1
        return counts

    def split(self, name: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == name]

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in self.records)

    def write(self, path) -> None:
        try:
            Path(path).write_text(self.to_jsonl())
        except OSError as exc:
            raise io_error(str(exc), str(path)) from None

    def digest(self) -> str:
        """Hash over manifest text and every referenced file's bytes."""
        h = hashlib.sha256(self.to_jsonl().encode())
        for r in self.records:
            for rel in (r.image_path, r.audio_path):
                h.update(_read_bytes(self.resolve(rel)))
        return h.hexdigest()


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as exc:
        raise io_error(str(exc), str(path)) from None


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(list(key)))


# --- audio synthesis ------------------------------------------------------


def _shaped_noise(rng, n, rate, sig: ClassSignature, tilt: float) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    f = np.maximum(freqs, 20.0)
    gain_db = tilt * np.log2(f / 1000.0)
    gain_db += sig.hiss_db * np.clip(np.log2(f / 2000.0), 0.0, None)
    gain = 10.0 ** (gain_db / 20.0)
    if sig.lowpass_hz > 0:
        gain /= np.sqrt(1.0 + (f / sig.lowpass_hz) ** 8)
    return np.fft.irfft(spectrum * gain, n)


def synth_audio(label: RoadCondition, rng: np.random.Generator, cfg: GeneratorConfig) -> np.ndarray:
    sig = cfg.signatures[label]
    rate = audio.TARGET_RATE
    n = int(round(cfg.clip_seconds * rate))
    t = np.arange(n) / rate
    tilt = sig.tilt_db_per_octave + rng.uniform(-cfg.tilt_jitter, cfg.tilt_jitter)
    x = _shaped_noise(rng, n, rate, sig, tilt)
    x /= np.sqrt(np.mean(x ** 2)) + 1e-12
    if sig.am_rate_hz > 0:
        rate_hz = sig.am_rate_hz * rng.uniform(0.7, 1.3)
        x *= 1.0 + sig.am_depth * np.sin(2 * np.pi * rate_hz * t + rng.uniform(0, 2 * np.pi))
    if sig.pulse_rate_hz > 0:
        period = 1.0 / (sig.pulse_rate_hz * rng.uniform(0.8, 1.2))
        onsets = np.arange(rng.uniform(0, period), cfg.clip_seconds, period)
        burst_len = int(0.02 * rate)
        env = np.exp(-np.arange(burst_len) / (0.004 * rate))
        for onset in onsets:
            i = int(onset * rate)
            seg = rng.standard_normal(burst_len) * env * 2.5
            x[i:i + burst_len] += seg[: n - i]
    # broadband floor shared by all classes blurs the class boundaries
    x += rng.standard_normal(n) * rng.uniform(0.05, 0.3)
    x /= np.sqrt(np.mean(x ** 2)) + 1e-12
    gain = 10.0 ** (rng.uniform(-cfg.gain_db, cfg.gain_db) / 20.0)
    return np.clip(0.08 * gain * x, -1.0, 1.0)


# --- image synthesis ------------------------------------------------------


def synth_image(label: RoadCondition, rng: np.random.Generator, cfg: GeneratorConfig) -> vision.Image:
    sig = cfg.signatures[label]
    s = cfg.image_size
    grain = vision.box_blur(rng.standard_normal((s, s, 1)), 1)[..., 0]
    grain /= grain.std() + 1e-12
    coarse = vision.box_blur(rng.standard_normal((s, s, 1)), max(1, s // 16))[..., 0]
    coarse /= coarse.std() + 1e-12
    gray = sig.base_gray + sig.texture_contrast * (0.7 * grain + 0.3 * coarse)
    px = np.repeat(gray[..., None], 3, axis=2) + np.asarray(sig.tint)
    yy, xx = np.mgrid[0:s, 0:s] / s
    for _ in range(sig.streaks):
        angle = rng.uniform(-0.5, 0.5)
        offset = rng.uniform(0.1, 0.9)
        width = rng.uniform(0.01, 0.025)
        dist = np.abs((xx - offset) * np.cos(angle) - (yy - 0.5) * np.sin(angle))
        px += rng.uniform(0.35, 0.55) * np.exp(-(dist / width) ** 2)[..., None]
    px += rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter)
    px += rng.normal(0.0, 0.02, size=px.shape)
    return vision.Image(np.clip(px, 0.0, 1.0))


# --- corpus ---------------------------------------------------------------


def generate_sample(label: RoadCondition, index: int, cfg: GeneratorConfig):
    img = synth_image(label, _rng(cfg.seed, int(label), index, 0), cfg)
    clip = synth_audio(label, _rng(cfg.seed, int(label), index, 1), cfg)
    return img, clip


def generate_synthetic_corpus(cfg: GeneratorConfig, out_dir, fractions=DEFAULT_FRACTIONS,
                              split_seed: int | None = None) -> DatasetManifest:
    """Write paired PPM/WAV files plus ``manifest.jsonl`` under ``out_dir``.

    The manifest is written last, only after every sample succeeded.
    """
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "audio").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise io_error(str(exc), str(out)) from None
    records = []
    for label in RoadCondition:
        for i in range(cfg.per_class):
            sid = f"{label.label}-{i:05d}"
            img, clip = generate_sample(label, i, cfg)
            image_rel = f"images/{sid}.ppm"
            audio_rel = f"audio/{sid}.wav"
            _write_bytes(out / image_rel, vision.encode_ppm(img))
            _write_bytes(out / audio_rel, audio.encode_wav(clip, audio.TARGET_RATE))
            records.append(SampleRecord(sid, image_rel, audio_rel, label))
    manifest = split_stratified(DatasetManifest(records, out), fractions,
                                cfg.seed if split_seed is None else split_seed)
    manifest.write(out / MANIFEST_NAME)
    return manifest


def _write_bytes(path: Path, data: bytes) -> None:
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise io_error(str(exc), str(path)) from None


def load_manifest(path, check_paths: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise io_error(str(exc), str(path)) from None
    records, seen = [], set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            obj = json.loads(line)
            rec = SampleRecord(str(obj["id"]), str(obj["image_path"]), str(obj["audio_path"]),
                               RoadCondition.parse(obj["label"]), str(obj.get("split", "train")))
        except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
            raise decode_error(f"malformed manifest line: {exc}", where) from None
        if rec.split not in SPLITS:
            raise decode_error(f"unknown split {rec.split!r}", where)
        if rec.id in seen:
            raise decode_error(f"duplicate sample id {rec.id!r}", where)
        seen.add(rec.id)
        records.append(rec)
    manifest = DatasetManifest(records, path.parent)
    if check_paths:
        for r in records:
            for rel in (r.image_path, r.audio_path):
                if not manifest.resolve(rel).is_file():
                    raise io_error(f"missing file {rel} for sample {r.id!r}", str(path))
    return manifest


def _split_counts(n: int, fractions) -> list[int]:
    raw = [n * f for f in fractions]
    counts = [int(np.floor(r + 1e-9)) for r in raw]
    remainder = n - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def split_stratified(manifest: DatasetManifest, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> DatasetManifest:
    """Seeded per-class assignment to train/val/test (largest-remainder rounding)."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise config_error(f"split fractions {fractions} must be three non-negative values summing to 1")
    by_class: dict[RoadCondition, list[int]] = {c: [] for c in RoadCondition}
    for i, r in enumerate(manifest.records):
        by_class[r.label].append(i)
    assigned = list(manifest.records)
    for label, idx in by_class.items():
        if not idx:
            continue
        counts = _split_counts(len(idx), fractions)
        for name, k in zip(SPLITS, counts):
            if k == 0 and fractions[SPLITS.index(name)] > 0:
                raise config_error(f"class {label.label} gets no {name} samples from {len(idx)} records")
        perm = _rng(seed, int(label), 7).permutation(len(idx))
        bounds = np.cumsum([0] + counts)
        for s, name in enumerate(SPLITS):
            for j in perm[bounds[s]:bounds[s + 1]]:
                assigned[idx[j]] = replace(manifest.records[idx[j]], split=name)
    return DatasetManifest(assigned, manifest.root)


# --- tensors --------------------------------------------------------------


def image_tensor(manifest: DatasetManifest, rec: SampleRecord, cfg: vision.ImageConfig,
                 corruption: tuple[str, float] | None = None, seed: int = 0) -> np.ndarray:
    img = vision.read_ppm(manifest.resolve(rec.image_path))
    if corruption is not None and corruption[1] > 0:
        img = vision.corrupt(img, corruption[0], corruption[1], seed)
    return vision.image_to_tensor(img, cfg)


def audio_tensor(manifest: DatasetManifest, rec: SampleRecord, cfg: audio.SpectrogramConfig,
                 cache: "SpectrogramCache | None" = None) -> np.ndarray:
    path = manifest.resolve(rec.audio_path)
    if cache is not None:
        values = cache.get(path)
    else:
        values = audio.wav_to_spectrogram(_read_bytes(path), cfg).values
    return np.asarray(values, dtype=np.float32)[None]


def load_arrays(manifest: DatasetManifest, records, modality: str,
                spec_cfg: audio.SpectrogramConfig | None = None,
                image_cfg: vision.ImageConfig | None = None,
                cache: "SpectrogramCache | None" = None,
                corruption=None, seed: int = 0):
    """Stacked float32 tensors and label codes for one modality."""
    spec_cfg = spec_cfg or audio.SpectrogramConfig()
    image_cfg = image_cfg or vision.ImageConfig()
    if modality == "image":
        xs = [image_tensor(manifest, r, image_cfg, corruption, seed + i) for i, r in enumerate(records)]
    elif modality == "audio":
        xs = [audio_tensor(manifest, r, spec_cfg, cache) for r in records]
    else:
        raise config_error(f"unknown modality {modality!r}")
    y = np.array([int(r.label) for r in records], dtype=np.int64)
    if not xs:
        return np.zeros((0,)), y
    return np.stack(xs), y


# --- spectrogram cache ----------------------------------------------------


def cache_key(audio_bytes: bytes, cfg: audio.SpectrogramConfig) -> str:
    h = hashlib.sha256(audio_bytes)
    h.update(json.dumps(cfg.to_dict(), sort_keys=True).encode())
    return h.hexdigest()


class SpectrogramCache:
    """SRSM files keyed by ``sha256(audio bytes + config)`` with a JSON index."""

    INDEX = "index.json"

    def __init__(self, cache_dir, cfg: audio.SpectrogramConfig | None = None):
        self.dir = Path(cache_dir)
        self.cfg = cfg or audio.SpectrogramConfig()
        self.hits = 0
        self.misses = 0
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise io_error(str(exc), str(self.dir)) from None
        index_path = self.dir / self.INDEX
        self.index: dict[str, str] = {}
        if index_path.is_file():
            try:
                self.index = json.loads(index_path.read_text())
            except (OSError, json.JSONDecodeError):
                self.index = {}

    def get(self, audio_path) -> np.ndarray:
        data = _read_bytes(audio_path)
        key = cache_key(data, self.cfg)
        name = self.index.get(key)
        if name is not None:
            path = self.dir / name
            if path.is_file():
                try:
                    values = audio.decode_matrix(path.read_bytes())
                except Exception:
                    values = None
                if values is not None and values.shape == (self.cfg.num_frames(), self.cfg.mel_bins):
                    self.hits += 1
                    return values
        self.misses += 1
        values = audio.wav_to_spectrogram(data, self.cfg).values.astype(np.float32)
        name = f"{key}.srsm"
        tmp = self.dir / f".{name}.{os.getpid()}.tmp"
        _write_bytes(tmp, audio.encode_matrix(values))
        os.replace(tmp, self.dir / name)
        self.index[key] = name
        return values

    def save_index(self) -> None:
        _write_bytes(self.dir / self.INDEX, json.dumps(self.index, sort_keys=True, indent=1).encode())


def precompute_spectrograms(manifest: DatasetManifest, cfg: audio.SpectrogramConfig, cache_dir) -> SpectrogramCache:
    cache = SpectrogramCache(cache_dir, cfg)
    for r in manifest.records:
        cache.get(manifest.resolve(r.audio_path))
    cache.save_index()
    return cache


def class_balance(records) -> Counter:
    return Counter(r.label for r in records)
