from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import checkerboard, textured_image  # noqa: E402

from camadapt.imaging import ImageBuffer  # noqa: E402


@pytest.fixture
def texture():
    return textured_image()


@pytest.fixture
def checker():
    return checkerboard()


@pytest.fixture
def random_images():
    """A batch of small random RGB images with a fixed seed."""
    rng = np.random.default_rng(1234)

    def make(count: int, width: int = 24, height: int = 18) -> list[ImageBuffer]:
        return [
            ImageBuffer(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))
            for _ in range(count)
        ]

    return make
