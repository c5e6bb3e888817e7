"""Shared fixtures and independent reference oracles.

The oracles here are deliberately written as plain per-pixel Python loops,
separate from the package's vectorized implementations, so tests compare two
independent routes to the same definition.
"""

from __future__ import annotations

import numpy as np

from camadapt.imaging import ImageBuffer

LUMA = (0.299, 0.587, 0.114)


def textured_image(width: int = 48, height: int = 36, seed: int = 7) -> ImageBuffer:
    """A deterministic, feature-rich test image: gradients, blocks, noise."""
    rng = np.random.default_rng(seed)
    xx, yy = np.meshgrid(np.arange(width), np.arange(height))
    r = 40 + 140 * xx / max(width - 1, 1)
    g = 60 + 120 * yy / max(height - 1, 1)
    b = 90 + 60 * np.sin(xx / 3.0) * np.cos(yy / 4.0)
    px = np.stack([r, g, b], axis=2)
    for _ in range(4):
        x0 = int(rng.integers(0, max(width - 8, 1)))
        y0 = int(rng.integers(0, max(height - 8, 1)))
        color = rng.integers(20, 236, size=3)
        px[y0 : y0 + 6, x0 : x0 + 6] = color
    px += rng.normal(0.0, 3.0, size=px.shape)
    return ImageBuffer(np.clip(np.rint(px), 0, 255).astype(np.uint8))


def checkerboard(width: int = 16, height: int = 12, cell: int = 2) -> ImageBuffer:
    xx, yy = np.meshgrid(np.arange(width), np.arange(height))
    mask = ((xx // cell) + (yy // cell)) % 2 == 0
    px = np.zeros((height, width, 3), dtype=np.uint8)
    px[mask] = (200, 160, 40)
    px[~mask] = (30, 60, 120)
    return ImageBuffer(px)


def _clamp8(v: float) -> int:
    return max(0, min(255, round(v)))


def _luma_at(px, y: int, x: int) -> float:
    return LUMA[0] * px[y][x][0] + LUMA[1] * px[y][x][1] + LUMA[2] * px[y][x][2]


def oracle_apply_knob(img: ImageBuffer, knob: str, factor: float) -> np.ndarray:
    """Per-pixel loop oracle for the knob blend; returns (H, W, 3) uint8."""
    h, w = img.height, img.width
    px = img.pixels.astype(np.float64).tolist()

    if knob == "brightness":
        deg = [[[0.0, 0.0, 0.0] for _ in range(w)] for _ in range(h)]
    elif knob == "contrast":
        mean = sum(_luma_at(px, y, x) for y in range(h) for x in range(w)) / (h * w)
        deg = [[[mean, mean, mean] for _ in range(w)] for _ in range(h)]
    elif knob == "color_saturation":
        deg = [
            [[_luma_at(px, y, x)] * 3 for x in range(w)]
            for y in range(h)
        ]
    elif knob == "sharpness":
        deg = [[[0.0, 0.0, 0.0] for _ in range(w)] for _ in range(h)]
        for y in range(h):
            for x in range(w):
                for c in range(3):
                    acc = 0.0
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            yy = min(max(y + dy, 0), h - 1)
                            xx = min(max(x + dx, 0), w - 1)
                            weight = 5.0 if dy == 0 and dx == 0 else 1.0
                            acc += weight * px[yy][xx][c]
                    deg[y][x][c] = acc / 13.0
    else:
        raise ValueError(knob)

    out = np.zeros((h, w, 3), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            for c in range(3):
                value = (1.0 - factor) * deg[y][x][c] + factor * px[y][x][c]
                out[y, x, c] = _clamp8(value)
    return out


def oracle_convolve3x3(channel: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Loop oracle for edge-replicated 3x3 convolution on a 2-D float array."""
    h, w = channel.shape
    out = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    acc += kernel[dy + 1][dx + 1] * channel[yy][xx]
            out[y, x] = acc
    return out


def oracle_features(img: ImageBuffer) -> tuple[float, float, float, float]:
    """Loop oracle for the feature tuple definition."""
    h, w = img.height, img.width
    px = img.pixels.astype(np.float64)

    lumas = [[_luma_at(px, y, x) for x in range(w)] for y in range(h)]
    flat = [lumas[y][x] for y in range(h) for x in range(w)]
    mean = sum(flat) / len(flat)
    variance = sum((v - mean) ** 2 for v in flat) / len(flat)

    sat_total = 0.0
    for y in range(h):
        for x in range(w):
            cmax = max(px[y][x])
            cmin = min(px[y][x])
            sat_total += (cmax - cmin) / cmax if cmax > 0 else 0.0

    sobel_x = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
    grad_total = 0.0
    for y in range(h):
        for x in range(w):
            gx = 0.0
            gy = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    gx += sobel_x[dy + 1][dx + 1] * lumas[yy][xx]
                    gy += sobel_x[dx + 1][dy + 1] * lumas[yy][xx]
            grad_total += (gx * gx + gy * gy) ** 0.5

    n = h * w
    return (mean, variance**0.5, sat_total / n, grad_total / n)


class ToyBrightnessEnv:
    """Tunable pipeline whose quality peaks at the top of the brightness range.

    Quality rises linearly from 0.6 at the bottom of the range to 1.0 at the
    top; the other knobs have no effect.  Frames are uniform gray with luma
    255 * quality, so a mean-luma estimator can read quality off the frame.
    """

    def __init__(self, initial=None):
        from camadapt.imaging import KnobConfig

        self.config = initial if initial is not None else KnobConfig()

    def knob_config(self):
        return self.config

    def set_knob_config(self, config):
        self.config = config

    def quality(self) -> float:
        from camadapt.imaging import KNOB_RANGES

        lo, hi = KNOB_RANGES["brightness"]
        return 1.0 - 0.4 * (hi - self.config.brightness) / (hi - lo)

    def produce_frame(self) -> ImageBuffer:
        level = int(round(255 * self.quality()))
        return ImageBuffer.uniform(8, 8, (level, level, level))


def luma_quality_estimator():
    """Estimator reading ToyBrightnessEnv quality back off the frame."""
    from camadapt.estimator import CallableEstimator

    return CallableEstimator(lambda img: float(img.pixels[0, 0, 0]) / 255.0)
