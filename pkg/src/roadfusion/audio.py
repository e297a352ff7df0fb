"""Audio ingestion and the log-Mel front end of the audio classifier.

Pipeline: ``decode_wav -> to_mono -> resample_to_16k -> frame_one_second
-> mel_spectrogram``. All functions are pure.
"""

from __future__ import annotations

import io
import math
import struct
import wave
from dataclasses import dataclass, field

import numpy as np

from .core import config_error, decode_error, empty_error, io_error, numeric_error, shape_error

TARGET_RATE = 16000
FRAME_LENGTH = TARGET_RATE  # one second
SRSM_MAGIC = b"SRSM"


@dataclass(frozen=True)
class AudioClip:
    """Samples in [-1, 1]; shape ``(n,)`` for mono or ``(n, channels)``."""

    samples: np.ndarray
    sample_rate: int

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    def __len__(self):
        return self.samples.shape[0]


@dataclass(frozen=True)
class AudioFrame:
    samples: np.ndarray
    source_offset: int = 0

    def __post_init__(self):
        if self.samples.shape != (FRAME_LENGTH,):
            raise shape_error(f"audio frame must hold {FRAME_LENGTH} samples, got {self.samples.shape}")


@dataclass(frozen=True)
class SpectrogramConfig:
    window_length: int = 400
    hop_length: int = 160
    fft_size: int = 512
    mel_bins: int = 64
    freq_min: float = 125.0
    freq_max: float = 7500.0
    log_floor: float = 1e-6
    sample_rate: int = TARGET_RATE

    def __post_init__(self):
        if not 0 < self.window_length <= self.fft_size:
            raise config_error("need 0 < window_length <= fft_size")
        if not 0 < self.hop_length <= self.window_length:
            raise config_error("need 0 < hop_length <= window_length")
        if not 0 < self.freq_min < self.freq_max <= self.sample_rate / 2:
            raise config_error("need 0 < freq_min < freq_max <= sample_rate/2")
        if self.mel_bins < 1:
            raise config_error("mel_bins must be >= 1")
        if not self.log_floor > 0:
            raise config_error("log_floor must be positive")

    def num_frames(self, n_samples: int = FRAME_LENGTH) -> int:
        return 1 + (n_samples - self.window_length) // self.hop_length

    def to_dict(self) -> dict:
        return {
            "window_length": self.window_length,
            "hop_length": self.hop_length,
            "fft_size": self.fft_size,
            "mel_bins": self.mel_bins,
            "freq_min": self.freq_min,
            "freq_max": self.freq_max,
            "log_floor": self.log_floor,
            "sample_rate": self.sample_rate,
        }


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray  # [num_frames, mel_bins]
    config: SpectrogramConfig = field(default_factory=SpectrogramConfig)


# --- decoding -------------------------------------------------------------


def decode_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE PCM16 little-endian file (mono or stereo)."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise decode_error("not a RIFF/WAVE container")
    try:
        with wave.open(io.BytesIO(data), "rb") as w:
            width = w.getsampwidth()
            channels = w.getnchannels()
            rate = w.getframerate()
            n = w.getnframes()
            raw = w.readframes(n)
    except (wave.Error, EOFError, struct.error) as exc:
        raise decode_error(f"malformed WAV: {exc}") from None
    if width != 2:
        raise decode_error(f"unsupported bit depth {8 * width}; only 16-bit PCM is accepted")
    if rate <= 0 or channels < 1:
        raise decode_error(f"bad header: rate={rate} channels={channels}")
    if n == 0 or not raw:
        raise empty_error("WAV data chunk holds no samples")
    pcm = np.frombuffer(raw, dtype="<i2")
    if pcm.size % channels:
        raise decode_error("truncated sample data")
    samples = pcm.astype(np.float64) / 32768.0
    if channels > 1:
        samples = samples.reshape(-1, channels)
    return AudioClip(samples, rate)


def encode_wav(samples: np.ndarray, sample_rate: int) -> bytes:
    """PCM16 LE mono/stereo WAV bytes; amplitudes clipped to [-1, 1)."""
    s = np.asarray(samples, dtype=np.float64)
    channels = 1 if s.ndim == 1 else s.shape[1]
    pcm = np.clip(np.round(s * 32768.0), -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(pcm.tobytes())
    return buf.getvalue()


def read_wav(path) -> AudioClip:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise io_error(str(exc), str(path)) from None
    return decode_wav(data)


# --- conditioning ---------------------------------------------------------


def to_mono(clip: AudioClip) -> AudioClip:
    if clip.channels == 1:
        return clip
    if clip.channels > 2:
        raise decode_error(f"{clip.channels} channels not supported")
    return AudioClip(clip.samples.mean(axis=1), clip.sample_rate)


def resample_to_16k(clip: AudioClip) -> AudioClip:
    """Linear interpolation onto the 16 kHz grid.

    Output sample ``j`` sits at input position ``j * rate / 16000``; past the
    last input sample the final value is held.
    """
    if clip.channels != 1:
        raise config_error("resample expects a mono clip")
    rate = clip.sample_rate
    if rate == TARGET_RATE:
        return clip
    if rate < TARGET_RATE // 2:
        raise config_error(f"input rate {rate} Hz below 8000 Hz is not supported")
    n_in = len(clip)
    n_out = int(round(n_in * TARGET_RATE / rate))
    positions = np.arange(n_out, dtype=np.float64) * (rate / TARGET_RATE)
    out = np.interp(positions, np.arange(n_in, dtype=np.float64), clip.samples)
    return AudioClip(out, TARGET_RATE)


def frame_one_second(clip: AudioClip) -> list[AudioFrame]:
    """Non-overlapping one-second frames, last one zero-padded at the tail."""
    if clip.sample_rate != TARGET_RATE or clip.channels != 1:
        raise config_error("framing expects a 16 kHz mono clip")
    n = len(clip)
    if n == 0:
        raise empty_error("cannot frame an empty clip")
    count = math.ceil(n / FRAME_LENGTH)
    padded = np.zeros(count * FRAME_LENGTH, dtype=np.float64)
    padded[:n] = clip.samples
    return [
        AudioFrame(padded[i * FRAME_LENGTH:(i + 1) * FRAME_LENGTH].copy(), i * FRAME_LENGTH)
        for i in range(count)
    ]


def preprocess_clip(clip: AudioClip) -> list[AudioFrame]:
    return frame_one_second(resample_to_16k(to_mono(clip)))


# --- Mel spectrogram ------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window of length n."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def mel_filterbank(cfg: SpectrogramConfig) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape ``[mel_bins, fft_size//2 + 1]``.

    Triangles are linear in mel: filter k rises from edge k to edge k+1 and
    falls to edge k+2, with ``mel_bins + 2`` edges evenly spaced between
    ``mel(freq_min)`` and ``mel(freq_max)``.
    """
    n_bins = cfg.fft_size // 2 + 1
    bin_mel = hz_to_mel(np.arange(n_bins) * cfg.sample_rate / cfg.fft_size)
    edges = np.linspace(hz_to_mel(cfg.freq_min), hz_to_mel(cfg.freq_max), cfg.mel_bins + 2)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_mel[None, :] - lower) / (center - lower)
    falling = (upper - bin_mel[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def mel_center_frequencies(cfg: SpectrogramConfig) -> np.ndarray:
    edges = np.linspace(hz_to_mel(cfg.freq_min), hz_to_mel(cfg.freq_max), cfg.mel_bins + 2)
    return mel_to_hz(edges[1:-1])


def power_frames(samples: np.ndarray, cfg: SpectrogramConfig) -> np.ndarray:
    """Hann-windowed power spectra, ``[num_frames, fft_size//2 + 1]``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < cfg.window_length:
        raise shape_error(f"need a 1-D signal of at least {cfg.window_length} samples")
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_length)[:: cfg.hop_length]
    spectrum = np.fft.rfft(frames * hann_window(cfg.window_length), n=cfg.fft_size, axis=1)
    return spectrum.real ** 2 + spectrum.imag ** 2


def mel_spectrogram(frame, cfg: SpectrogramConfig | None = None) -> MelSpectrogram:
    cfg = cfg or SpectrogramConfig()
    samples = frame.samples if isinstance(frame, AudioFrame) else frame
    energies = power_frames(samples, cfg) @ mel_filterbank(cfg).T
    values = np.log(np.maximum(energies, cfg.log_floor))
    if not np.all(np.isfinite(values)):
        raise numeric_error("non-finite value in Mel spectrogram")
    return MelSpectrogram(values, cfg)


def wav_to_spectrogram(data: bytes, cfg: SpectrogramConfig | None = None) -> MelSpectrogram:
    """First one-second frame of a WAV file as a log-Mel spectrogram."""
    return mel_spectrogram(preprocess_clip(decode_wav(data))[0], cfg)


# --- SRSM matrix dump -----------------------------------------------------


def encode_matrix(m: np.ndarray) -> bytes:
    m = np.asarray(m)
    if m.ndim != 2:
        raise shape_error("SRSM holds a 2-D matrix")
    rows, cols = m.shape
    return SRSM_MAGIC + struct.pack("<II", rows, cols) + np.ascontiguousarray(m, dtype="<f4").tobytes()


def decode_matrix(data: bytes) -> np.ndarray:
    if len(data) < 12 or data[:4] != SRSM_MAGIC:
        raise decode_error("not an SRSM matrix file")
    rows, cols = struct.unpack("<II", data[4:12])
    body = data[12:]
    if len(body) != 4 * rows * cols:
        raise decode_error(f"SRSM body holds {len(body)} bytes, expected {4 * rows * cols}")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float32)


def add_noise(samples: np.ndarray, level: float, seed: int = 0) -> np.ndarray:
    """Add white Gaussian noise with RMS ``level`` times the signal RMS; level 0 is the identity."""
    x = np.asarray(samples, dtype=np.float64)
    if level < 0:
        raise config_error(f"noise level {level} must be >= 0")
    if level == 0:
        return x.copy()
    rng = np.random.Generator(np.random.Philox(seed))
    rms = np.sqrt(np.mean(x ** 2))
    return np.clip(x + rng.standard_normal(x.shape) * level * rms, -1.0, 1.0)
