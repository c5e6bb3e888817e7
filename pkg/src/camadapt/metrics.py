"""Frame metrics: SSIM, the four-component feature tuple, and tiling.

SSIM follows the classic Gaussian-window formulation (11x11 window,
sigma 1.5, K1 = 0.01, K2 = 0.03, L = 255) computed on luma.  Statistics are
taken only where the full window fits inside both images, so border padding
never leaks into the score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import ImageBuffer, convolve3x3_float, saturation_channel, to_luma

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0

TILE_COLS = 4
TILE_ROWS = 3
TILE_COUNT = TILE_COLS * TILE_ROWS

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T

FEATURE_NAMES = ("brightness", "contrast", "color_saturation", "sharpness")


@dataclass(frozen=True)
class FeatureTuple:
    """Measured frame appearance: one scalar per tunable quantity.

    brightness: mean luma.
    contrast: RMS deviation of luma from its mean.
    color_saturation: mean HSV saturation.
    sharpness: mean 3x3 Sobel gradient magnitude of luma.
    """

    brightness: float
    contrast: float
    color_saturation: float
    sharpness: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.brightness, self.contrast, self.color_saturation, self.sharpness]
        )

    @classmethod
    def from_array(cls, values) -> "FeatureTuple":
        b, c, s, sh = (float(v) for v in values)
        return cls(b, c, s, sh)


def extract_features(img: ImageBuffer) -> FeatureTuple:
    luma = to_luma(img)
    gx = convolve3x3_float(luma, SOBEL_X)
    gy = convolve3x3_float(luma, SOBEL_Y)
    grad = np.sqrt(gx * gx + gy * gy)
    return FeatureTuple(
        brightness=float(luma.mean()),
        contrast=float(luma.std()),
        color_saturation=float(saturation_channel(img).mean()),
        sharpness=float(grad.mean()),
    )


def _gaussian_taps(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    taps = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return taps / taps.sum()


_SSIM_TAPS = _gaussian_taps(SSIM_WINDOW, SSIM_SIGMA)


def _window_mean(arr: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(arr, _SSIM_TAPS, axis=0, mode="nearest")
    return ndimage.correlate1d(out, _SSIM_TAPS, axis=1, mode="nearest")


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean structural similarity of two same-sized images, on luma.

    Returns a float in [-1, 1]; 1.0 exactly when the inputs are identical.
    Both dimensions must be at least the window size (11).
    """
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError(
            f"image sizes differ: {(a.height, a.width)} vs {(b.height, b.width)}"
        )
    if a.height < SSIM_WINDOW or a.width < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")

    x = to_luma(a)
    y = to_luma(b)
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2

    mu_x = _window_mean(x)
    mu_y = _window_mean(y)
    var_x = _window_mean(x * x) - mu_x * mu_x
    var_y = _window_mean(y * y) - mu_y * mu_y
    cov = _window_mean(x * y) - mu_x * mu_y

    ssim_map = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )

    # Keep only positions whose full window lies inside the image.
    pad = SSIM_WINDOW // 2
    return float(ssim_map[pad:-pad, pad:-pad].mean())


def tile_bounds(width: int, height: int) -> list[tuple[int, int, int, int]]:
    """The 12 tile rectangles (x0, y0, x1, y1), row-major, 4 columns by 3 rows.

    Division remainders go to the last column and last row, so the tiles
    partition the frame exactly.
    """
    if width < TILE_COLS or height < TILE_ROWS:
        raise ValueError(
            f"frame must be at least {TILE_COLS}x{TILE_ROWS}, got {width}x{height}"
        )
    base_w = width // TILE_COLS
    base_h = height // TILE_ROWS
    bounds = []
    for row in range(TILE_ROWS):
        y0 = row * base_h
        y1 = height if row == TILE_ROWS - 1 else y0 + base_h
        for col in range(TILE_COLS):
            x0 = col * base_w
            x1 = width if col == TILE_COLS - 1 else x0 + base_w
            bounds.append((x0, y0, x1, y1))
    return bounds


def split_tiles(img: ImageBuffer) -> list[ImageBuffer]:
    """Split a frame into its 12 tiles, row-major."""
    tiles = []
    for x0, y0, x1, y1 in tile_bounds(img.width, img.height):
        tiles.append(ImageBuffer(img.pixels[y0:y1, x0:x1].copy(), dict(img.meta)))
    return tiles


def tile_features(img: ImageBuffer) -> list[FeatureTuple]:
    return [extract_features(tile) for tile in split_tiles(img)]
