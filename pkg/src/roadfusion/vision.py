"""Road image decoding, resizing, normalisation and synthetic corruptions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import config_error, decode_error, io_error, shape_error

CORRUPTIONS = ("lowlight", "fog", "occlusion")
FOG_GRAY = 0.8
OCCLUDER_GRAY = 0.2


@dataclass(frozen=True)
class Image:
    pixels: np.ndarray  # [height, width, 3], values in [0, 1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class ImageConfig:
    target_size: int = 96
    mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: tuple[float, float, float] = (0.5, 0.5, 0.5)

    def __post_init__(self):
        if self.target_size < 8:
            raise config_error("target_size must be >= 8")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise config_error("mean and std need three entries")
        if any(s <= 0 for s in self.std):
            raise config_error("std entries must be strictly positive")

    def to_dict(self) -> dict:
        return {"target_size": self.target_size, "mean": list(self.mean), "std": list(self.std)}


def _header_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and (data[pos:pos + 1].isspace() or data[pos:pos + 1] == b"#"):
            if data[pos:pos + 1] == b"#":
                end = data.find(b"\n", pos)
                pos = len(data) if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise decode_error("truncated PPM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def decode_ppm(data: bytes) -> Image:
    if data[:2] != b"P6":
        raise decode_error(f"unsupported image magic {data[:2]!r}; only binary PPM (P6) is read")
    tokens, offset = _header_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise decode_error("non-numeric PPM header field") from None
    if maxval != 255:
        raise decode_error(f"maxval {maxval} unsupported; expected 255")
    if width < 1 or height < 1:
        raise decode_error(f"bad dimensions {width}x{height}")
    need = width * height * 3
    raster = data[offset:offset + need]
    if len(raster) < need:
        raise decode_error(f"truncated pixel data: {len(raster)} of {need} bytes")
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return Image(px.astype(np.float64) / 255.0)


def encode_ppm(img: Image) -> bytes:
    px = np.clip(np.round(img.pixels * 255.0), 0, 255).astype(np.uint8)
    return f"P6 {img.width} {img.height} 255\n".encode() + px.tobytes()


def read_ppm(path) -> Image:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise io_error(str(exc), str(path)) from None
    return decode_ppm(data)


def _sample_positions(n_in: int, n_out: int) -> np.ndarray:
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def resize_bilinear(img: Image, target: int) -> Image:
    """Corner-aligned bilinear resize to ``target x target``."""
    if target < 1:
        raise config_error("resize target must be >= 1")
    src = img.pixels
    if src.shape[:2] == (target, target):
        return Image(src.copy())
    ys = _sample_positions(img.height, target)
    xs = _sample_positions(img.width, target)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, img.height - 1)
    x1 = np.minimum(x0 + 1, img.width - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bottom = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    out = top * (1 - wy) + bottom * wy
    # interpolation weights can leave tiny excursions past the source range
    return Image(np.clip(out, src.min(), src.max()))


def normalize_image(img: Image, cfg: ImageConfig | None = None) -> np.ndarray:
    """Channel-major float32 tensor ``[3, size, size]``."""
    cfg = cfg or ImageConfig()
    if img.pixels.shape != (cfg.target_size, cfg.target_size, 3):
        raise shape_error(
            f"image is {img.height}x{img.width}, expected {cfg.target_size}x{cfg.target_size}"
        )
    mean = np.asarray(cfg.mean, dtype=np.float64)
    std = np.asarray(cfg.std, dtype=np.float64)
    out = (img.pixels - mean) / std
    return np.ascontiguousarray(out.transpose(2, 0, 1), dtype=np.float32)


def image_to_tensor(img: Image, cfg: ImageConfig | None = None) -> np.ndarray:
    cfg = cfg or ImageConfig()
    return normalize_image(resize_bilinear(img, cfg.target_size), cfg)


def box_blur(pixels: np.ndarray, radius: int) -> np.ndarray:
    """Mean over a ``(2r+1)^2`` window with edge replication."""
    if radius <= 0:
        return pixels.copy()
    k = 2 * radius + 1
    padded = np.pad(pixels, ((radius, radius), (radius, radius), (0, 0)), mode="edge")
    c = np.cumsum(np.cumsum(padded, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0), (0, 0)))
    h, w = pixels.shape[:2]
    total = c[k:k + h, k:k + w] - c[:h, k:k + w] - c[k:k + h, :w] + c[:h, :w]
    return total / (k * k)


def corrupt(img: Image, kind: str, severity: float, seed: int = 0) -> Image:
    """Apply a low-light, fog or occlusion corruption; severity 0 is the identity."""
    if kind not in CORRUPTIONS:
        raise config_error(f"unknown corruption {kind!r}; expected one of {CORRUPTIONS}")
    if not 0.0 <= severity <= 1.0:
        raise config_error(f"severity {severity} outside [0, 1]")
    px = img.pixels
    if severity == 0:
        return Image(px.copy())
    if kind == "lowlight":
        out = px * (1.0 - 0.8 * severity)
    elif kind == "fog":
        blurred = box_blur(px, math.ceil(4 * severity))
        out = (1.0 - severity) * blurred + severity * FOG_GRAY
    else:
        h, w = px.shape[:2]
        side = min(h, w, int(round(math.sqrt(severity * 0.5 * h * w))))
        rng = np.random.Generator(np.random.Philox(seed))
        top = int(rng.integers(0, h - side + 1))
        left = int(rng.integers(0, w - side + 1))
        out = px.copy()
        out[top:top + side, left:left + side] = OCCLUDER_GRAY
    return Image(np.clip(out, 0.0, 1.0))
