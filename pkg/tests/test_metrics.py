from __future__ import annotations

import numpy as np
import pytest
from skimage.metrics import structural_similarity as sk_ssim

from helpers import checkerboard, oracle_features, textured_image

from camadapt.imaging import ImageBuffer, apply_knob, to_luma
from camadapt.metrics import (
    FeatureTuple,
    extract_features,
    split_tiles,
    ssim,
    tile_bounds,
    tile_features,
)


def reference_ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Independent route: scikit-image's SSIM on the same luma planes."""
    return float(
        sk_ssim(
            to_luma(a),
            to_luma(b),
            data_range=255.0,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
        )
    )


class TestSsim:
    def test_self_similarity_is_exactly_one(self, texture, random_images):
        assert ssim(texture, texture) == 1.0
        for img in random_images(3, width=32, height=24):
            assert ssim(img, img) == 1.0

    def test_symmetric(self, texture):
        other = apply_knob(texture, "brightness", 1.3)
        assert abs(ssim(texture, other) - ssim(other, texture)) <= 1e-12

    def test_heavy_noise_scores_low(self):
        img = textured_image(width=64, height=48, seed=2)
        rng = np.random.default_rng(0)
        noisy = ImageBuffer.from_float(
            img.pixels.astype(np.float64) + rng.normal(0.0, 50.0, img.pixels.shape)
        )
        ours = ssim(img, noisy)
        assert ours < 0.5
        assert abs(ours - reference_ssim(img, noisy)) <= 0.02

    def test_agrees_with_reference_implementation(self):
        img = textured_image(width=56, height=42, seed=9)
        pairs = [
            (img, apply_knob(img, "brightness", 0.7)),
            (img, apply_knob(img, "contrast", 1.8)),
            (img, apply_knob(img, "color_saturation", 0.3)),
            (img, apply_knob(img, "sharpness", 1.5)),
        ]
        for a, b in pairs:
            assert abs(ssim(a, b) - reference_ssim(a, b)) <= 0.02

    def test_strictly_below_one_when_pixels_differ(self, texture):
        px = texture.pixels.copy()
        px[5, 5] = np.clip(px[5, 5].astype(int) + 10, 0, 255).astype(np.uint8)
        assert ssim(texture, ImageBuffer(px)) < 1.0

    def test_rejects_size_mismatch_and_small_images(self):
        a = ImageBuffer.uniform(16, 16, (5, 5, 5))
        b = ImageBuffer.uniform(15, 16, (5, 5, 5))
        with pytest.raises(ValueError):
            ssim(a, b)
        tiny = ImageBuffer.uniform(10, 10, (5, 5, 5))
        with pytest.raises(ValueError):
            ssim(tiny, tiny)


class TestFeatures:
    def test_uniform_midgray(self):
        img = ImageBuffer.uniform(16, 12, (128, 128, 128))
        feats = extract_features(img)
        assert feats.brightness == pytest.approx(128.0)
        assert feats.contrast == 0.0
        assert feats.color_saturation == 0.0
        assert feats.sharpness == 0.0

    @pytest.mark.parametrize("maker", [checkerboard, textured_image])
    def test_matches_loop_oracle(self, maker):
        img = maker(width=14, height=10)
        expected = oracle_features(img)
        feats = extract_features(img)
        assert feats.as_array() == pytest.approx(np.array(expected), rel=1e-9)

    def test_nonnegative(self, random_images):
        for img in random_images(5):
            assert (extract_features(img).as_array() >= 0.0).all()

    def test_brightness_feature_tracks_brightness_knob(self, texture):
        base = extract_features(texture).brightness
        up = extract_features(apply_knob(texture, "brightness", 1.25)).brightness
        down = extract_features(apply_knob(texture, "brightness", 0.75)).brightness
        assert down < base < up

    def test_round_trip_array(self):
        feats = FeatureTuple(1.0, 2.0, 0.5, 3.5)
        assert FeatureTuple.from_array(feats.as_array()) == feats


class TestTiles:
    def test_even_split_400x300(self):
        img = ImageBuffer(np.zeros((300, 400, 3), dtype=np.uint8))
        tiles = split_tiles(img)
        assert len(tiles) == 12
        assert all(t.width == 100 and t.height == 100 for t in tiles)

    def test_remainder_goes_to_last_row_and_column(self):
        bounds = tile_bounds(401, 301)
        widths = {b[2] - b[0] for b in bounds[:3]}
        assert widths == {100}
        assert bounds[3][2] - bounds[3][0] == 101  # last column
        assert bounds[8][3] - bounds[8][1] == 101  # last row
        # Exact partition: areas sum to the frame area.
        assert sum((b[2] - b[0]) * (b[3] - b[1]) for b in bounds) == 401 * 301

    def test_partition_reassembles_bit_exact(self, texture):
        tiles = split_tiles(texture)
        rebuilt = np.zeros_like(texture.pixels)
        for tile, (x0, y0, x1, y1) in zip(tiles, tile_bounds(texture.width, texture.height)):
            rebuilt[y0:y1, x0:x1] = tile.pixels
        assert np.array_equal(rebuilt, texture.pixels)

    def test_rejects_frames_smaller_than_grid(self):
        img = ImageBuffer(np.zeros((2, 5, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            split_tiles(img)

    def test_whole_frame_brightness_is_weighted_tile_mean(self, texture):
        whole = extract_features(texture).brightness
        total = 0.0
        pixels = 0
        for tile, feats in zip(split_tiles(texture), tile_features(texture)):
            count = tile.width * tile.height
            total += feats.brightness * count
            pixels += count
        assert whole == pytest.approx(total / pixels, rel=1e-12)
