"""Image buffers, virtual knob transforms, and image file I/O.

The four virtual knobs (brightness, contrast, color saturation, sharpness)
share one blend model: each knob derives a degenerate image D from the input
I and returns clamp((1 - factor) * D + factor * I) per pixel, so factor 1.0
is always the identity.  Arithmetic runs in float64; results are rounded
half-to-even and clamped to [0, 255] on write-back.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image

# Canonical knob names, in application order.
KNOB_NAMES = ("brightness", "contrast", "color_saturation", "sharpness")

# Factor range each knob sweeps on a real camera sweep.
KNOB_RANGES = {
    "brightness": (0.6, 1.6),
    "contrast": (0.6, 3.6),
    "color_saturation": (0.1, 2.0),
    "sharpness": (0.5, 1.6),
}

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# Sharpness degenerate: 3x3 smoothing, all-ones except center weight 5, /13.
SHARPNESS_KERNEL = np.array(
    [[1.0, 1.0, 1.0], [1.0, 5.0, 1.0], [1.0, 1.0, 1.0]]
) / 13.0


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """An RGB image: (height, width, 3) uint8 pixels plus free-form metadata.

    ``meta`` rides along through transforms (shallow-copied) so pipeline
    stages can tag frames with identifiers without touching pixel data.
    """

    pixels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        px = self.pixels
        if not isinstance(px, np.ndarray):
            raise ValueError("pixels must be a numpy array")
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must have shape (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must contain at least one pixel")
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_float(cls, arr: np.ndarray, meta: dict | None = None) -> "ImageBuffer":
        """Write-back rule: round half-to-even, clamp to [0, 255], cast."""
        out = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
        return cls(out, dict(meta) if meta else {})

    @classmethod
    def uniform(cls, width: int, height: int, rgb: tuple[int, int, int]) -> "ImageBuffer":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:, :] = np.asarray(rgb, dtype=np.uint8)
        return cls(px)

    def with_meta(self, **entries) -> "ImageBuffer":
        merged = dict(self.meta)
        merged.update(entries)
        return replace(self, meta=merged)


@dataclass(frozen=True)
class KnobConfig:
    """One virtual knob factor per knob; 1.0 everywhere is the identity."""

    brightness: float = 1.0
    contrast: float = 1.0
    color_saturation: float = 1.0
    sharpness: float = 1.0

    def __post_init__(self) -> None:
        for name in KNOB_NAMES:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} factor must be finite and >= 0, got {value}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.brightness, self.contrast, self.color_saturation, self.sharpness)

    @classmethod
    def from_tuple(cls, values) -> "KnobConfig":
        b, c, s, sh = (float(v) for v in values)
        return cls(b, c, s, sh)

    def value_of(self, knob: str) -> float:
        _check_knob(knob)
        return getattr(self, knob)

    def with_value(self, knob: str, value: float) -> "KnobConfig":
        _check_knob(knob)
        return replace(self, **{knob: value})

    def clamped(self) -> "KnobConfig":
        """Clip every factor into its camera sweep range."""
        values = {
            name: min(max(getattr(self, name), lo), hi)
            for name, (lo, hi) in KNOB_RANGES.items()
        }
        return KnobConfig(**values)


def _check_knob(knob: str) -> None:
    if knob not in KNOB_NAMES:
        raise ValueError(f"unknown knob {knob!r}, expected one of {KNOB_NAMES}")


def to_luma(img: ImageBuffer) -> np.ndarray:
    """Per-pixel luma 0.299 R + 0.587 G + 0.114 B as float64, shape (H, W).

    Computed as (299 R + 587 G + 114 B) / 1000 so gray pixels map to their
    exact value (the integer weights sum to 1000 with no rounding error).
    """
    px = img.pixels.astype(np.float64)
    return (299.0 * px[:, :, 0] + 587.0 * px[:, :, 1] + 114.0 * px[:, :, 2]) / 1000.0


def saturation_channel(img: ImageBuffer) -> np.ndarray:
    """HSV saturation per pixel in [0, 1]: (max - min) / max, 0 where max is 0."""
    px = img.pixels.astype(np.float64)
    cmax = px.max(axis=2)
    cmin = px.min(axis=2)
    out = np.zeros_like(cmax)
    np.divide(cmax - cmin, cmax, out=out, where=cmax > 0)
    return out


def convolve3x3_float(channel: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 convolution on a 2-D float array with edge-replicated borders."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.shape != (3, 3):
        raise ValueError(f"kernel must be 3x3, got {kernel.shape}")
    src = np.pad(np.asarray(channel, dtype=np.float64), 1, mode="edge")
    h, w = channel.shape
    out = np.zeros((h, w), dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            out += kernel[dy, dx] * src[dy : dy + h, dx : dx + w]
    return out


def convolve3x3(img: ImageBuffer, kernel: np.ndarray) -> ImageBuffer:
    """Per-channel 3x3 convolution with the standard write-back rule."""
    px = img.pixels.astype(np.float64)
    out = np.empty_like(px)
    for c in range(3):
        out[:, :, c] = convolve3x3_float(px[:, :, c], kernel)
    return ImageBuffer.from_float(out, meta=img.meta)


def _degenerate(img: ImageBuffer, knob: str) -> np.ndarray:
    """The all-the-way-down image D for a knob, as float64 (H, W, 3)."""
    px = img.pixels.astype(np.float64)
    if knob == "brightness":
        return np.zeros_like(px)
    if knob == "contrast":
        return np.full_like(px, to_luma(img).mean())
    if knob == "color_saturation":
        return np.repeat(to_luma(img)[:, :, np.newaxis], 3, axis=2)
    if knob == "sharpness":
        out = np.empty_like(px)
        for c in range(3):
            out[:, :, c] = convolve3x3_float(px[:, :, c], SHARPNESS_KERNEL)
        return out
    _check_knob(knob)
    raise AssertionError("unreachable")


def apply_knob(img: ImageBuffer, knob: str, factor: float) -> ImageBuffer:
    """Blend the input toward (factor < 1) or past (factor > 1) its degenerate.

    Any factor >= 0 is accepted; camera sweep ranges are a calibration
    concern, not a transform one.
    """
    _check_knob(knob)
    if not np.isfinite(factor) or factor < 0.0:
        raise ValueError(f"factor must be finite and >= 0, got {factor}")
    degenerate = _degenerate(img, knob)
    blended = (1.0 - factor) * degenerate + factor * img.pixels.astype(np.float64)
    return ImageBuffer.from_float(blended, meta=img.meta)


def apply_config(img: ImageBuffer, config: KnobConfig) -> ImageBuffer:
    """Apply all four knobs in canonical order (brightness first)."""
    out = img
    for knob in KNOB_NAMES:
        factor = config.value_of(knob)
        if factor != 1.0:  # factor 1.0 is the exact identity
            out = apply_knob(out, knob, factor)
    return out


# ---------------------------------------------------------------------------
# File I/O.  Binary PPM (P6) is the bit-exact fixture format; PNG is the
# interchange format for frames and the external estimator wire protocol.
# ---------------------------------------------------------------------------


def write_ppm(path, img: ImageBuffer) -> None:
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (img.width, img.height))
        fh.write(img.pixels.tobytes())


def read_ppm(path) -> ImageBuffer:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _ppm_header_tokens(data)
    if len(tokens) != 4 or tokens[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 PPM is supported, got {maxval}")
    expected = width * height * 3
    raster = data[offset : offset + expected]
    if len(raster) != expected:
        raise ValueError(f"{path}: truncated PPM raster")
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return ImageBuffer(px.copy())


def _ppm_header_tokens(data: bytes) -> tuple[list[bytes], int]:
    """Collect the 4 header tokens, honoring '#' comments, return raster offset."""
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        ch = data[i : i + 1]
        if ch == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            start = i
            while i < len(data) and not data[i : i + 1].isspace():
                i += 1
            tokens.append(data[start:i])
    # Exactly one whitespace byte separates the header from the raster.
    return tokens, i + 1


def write_png(path, img: ImageBuffer) -> None:
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def read_png(path, meta: dict | None = None) -> ImageBuffer:
    with Image.open(path) as im:
        px = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return ImageBuffer(px.copy(), dict(meta) if meta else {})


def png_bytes(img: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_from_bytes(data: bytes, meta: dict | None = None) -> ImageBuffer:
    with Image.open(io.BytesIO(data)) as im:
        px = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return ImageBuffer(px.copy(), dict(meta) if meta else {})


def read_image(path) -> ImageBuffer:
    name = str(path).lower()
    if name.endswith(".ppm"):
        return read_ppm(path)
    if name.endswith(".png"):
        return read_png(path)
    raise ValueError(f"unsupported image extension: {path}")


def write_image(path, img: ImageBuffer) -> None:
    name = str(path).lower()
    if name.endswith(".ppm"):
        write_ppm(path, img)
    elif name.endswith(".png"):
        write_png(path, img)
    else:
        raise ValueError(f"unsupported image extension: {path}")
