"""Simulated real-time replay: camera frames and 100 ms audio blocks in,
one fused decision per second of stream time out."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import audio, vision
from .core import Prediction, config_error, empty_error
from .fusion import MultimodalClassifier, predict_multimodal

BLOCK_MS = 100
BLOCK_SAMPLES = audio.TARGET_RATE * BLOCK_MS // 1000
WINDOW_MS = 1000

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StreamEvent:
    timestamp: float  # ms since stream start; audio blocks are stamped at their end
    source: str  # "camera" or "microphone"
    payload: object  # vision.Image or an audio block
    ref: str = ""  # frame id or sample id


@dataclass(frozen=True)
class StreamSegment:
    """One second of synchronized sensor data."""

    sample_id: str
    image: vision.Image
    audio: np.ndarray  # 16000 samples at 16 kHz


@dataclass(frozen=True)
class DecisionRecord:
    window_index: int
    prediction: Prediction
    latency_ms: float
    frame_id: str
    audio_span: tuple[int, int]  # sample offsets into the stream

    def to_json(self) -> dict:
        return {"window_index": self.window_index, "label": self.prediction.label.label,
                "probs": list(self.prediction.distribution.probs), "latency_ms": self.latency_ms}


def segments_from_manifest(manifest, records) -> list[StreamSegment]:
    out = []
    for r in records:
        img = vision.read_ppm(manifest.resolve(r.image_path))
        frame = audio.preprocess_clip(audio.read_wav(manifest.resolve(r.audio_path)))[0]
        out.append(StreamSegment(r.id, img, frame.samples))
    return out


def build_events(segments, rate: float) -> list[StreamEvent]:
    """Camera frames at ``rate`` per second and 100 ms microphone blocks, time-ordered.

    Every camera frame taken during second ``w`` shows segment ``w``'s image.
    """
    if rate <= 0:
        raise config_error(f"frame rate must be positive, got {rate}")
    events = []
    duration_ms = WINDOW_MS * len(segments)
    n_frames = math.ceil(duration_ms * rate / 1000.0 - 1e-9)
    for k in range(n_frames):
        ts = k * 1000.0 / rate
        seg = segments[int(ts // WINDOW_MS)]
        events.append(StreamEvent(ts, "camera", seg.image, f"{seg.sample_id}#f{k}"))
    for w, seg in enumerate(segments):
        for b in range(WINDOW_MS // BLOCK_MS):
            block = seg.audio[b * BLOCK_SAMPLES:(b + 1) * BLOCK_SAMPLES]
            # a block is stamped when it is complete, i.e. at the end of its span
            events.append(StreamEvent(w * WINDOW_MS + (b + 1) * BLOCK_MS, "microphone", block, seg.sample_id))
    # at equal timestamps the block closing a window goes before the next window's frame
    events.sort(key=lambda e: (e.timestamp, e.source != "microphone"))
    return events


def decide(clf: MultimodalClassifier, image: vision.Image, samples: np.ndarray,
           image_cfg: vision.ImageConfig, spec_cfg: audio.SpectrogramConfig, sample_id: str = "") -> Prediction:
    """The per-window compute path shared by streaming and batch evaluation."""
    x_img = vision.image_to_tensor(image, image_cfg)
    spec = audio.mel_spectrogram(audio.AudioFrame(samples), spec_cfg)
    x_aud = spec.values[None].astype(np.float32)
    return predict_multimodal(clf, x_img, x_aud, sample_id)


def replay_stream(events, clf: MultimodalClassifier, speed: float = 1.0,
                  image_cfg: vision.ImageConfig | None = None,
                  spec_cfg: audio.SpectrogramConfig | None = None,
                  on_decision=None) -> list[DecisionRecord]:
    """Deliver events against a wall clock compressed by ``speed`` and decide per window.

    A window closes when its last audio block has arrived and the clock has
    reached the window end; latency runs from that moment to the decision.
    Events older than the open window are dropped.
    """
    if not speed > 0:
        raise config_error(f"speed must be positive, got {speed}")
    image_cfg = image_cfg or vision.ImageConfig()
    spec_cfg = spec_cfg or audio.SpectrogramConfig()
    start = time.perf_counter()
    window = 0
    blocks: list[np.ndarray] = []
    latest = None  # (frame id, image) received in the open window
    audio_ref = ""
    records: list[DecisionRecord] = []
    dropped = 0

    def wait_until(stream_ms):
        if math.isinf(speed):
            return
        delay = start + stream_ms / 1000.0 / speed - time.perf_counter()
        if delay > 0:
            time.sleep(delay)

    for ev in events:
        wait_until(ev.timestamp)
        if ev.timestamp < window * WINDOW_MS:
            dropped += 1
            continue
        if ev.source == "camera":
            latest = (ev.ref, ev.payload)
            continue
        blocks.append(np.asarray(ev.payload))
        audio_ref = ev.ref
        if len(blocks) * BLOCK_SAMPLES < audio.FRAME_LENGTH:
            continue
        wait_until((window + 1) * WINDOW_MS)
        closed = time.perf_counter()
        if latest is None:
            raise config_error(f"no camera frame arrived within window {window}")
        samples = np.concatenate(blocks)
        pred = decide(clf, latest[1], samples, image_cfg, spec_cfg, audio_ref)
        latency = (time.perf_counter() - closed) * 1000.0
        span = (window * audio.FRAME_LENGTH, (window + 1) * audio.FRAME_LENGTH)
        rec = DecisionRecord(window, pred, latency, latest[0], span)
        records.append(rec)
        if on_decision is not None:
            on_decision(rec)
        window += 1
        blocks = []
        latest = None
    if dropped:
        log.warning("dropped %d late events", dropped)
    return records


def batch_decisions(segments, clf: MultimodalClassifier, image_cfg=None, spec_cfg=None) -> list[Prediction]:
    image_cfg = image_cfg or vision.ImageConfig()
    spec_cfg = spec_cfg or audio.SpectrogramConfig()
    return [decide(clf, s.image, s.audio, image_cfg, spec_cfg, s.sample_id) for s in segments]


def latency_stats(records) -> dict:
    """Nearest-rank p50/p95 and max of per-decision latency (ms)."""
    values = sorted(r.latency_ms if isinstance(r, DecisionRecord) else float(r) for r in records)
    if not values:
        raise empty_error("no decision records")
    n = len(values)

    def rank(p):
        return values[max(1, math.ceil(p / 100.0 * n)) - 1]

    return {"p50": rank(50), "p95": rank(95), "max": values[-1], "count": n}
