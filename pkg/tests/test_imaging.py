from __future__ import annotations

import numpy as np
import pytest

from helpers import oracle_apply_knob, oracle_convolve3x3, textured_image

from camadapt.imaging import (
    KNOB_NAMES,
    KNOB_RANGES,
    ImageBuffer,
    KnobConfig,
    apply_config,
    apply_knob,
    convolve3x3,
    png_bytes,
    read_image,
    read_png,
    read_ppm,
    saturation_channel,
    to_luma,
    write_png,
    write_ppm,
)


class TestImageBuffer:
    def test_validates_shape_and_dtype(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((4, 4, 3), dtype=np.float64))
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((0, 4, 3), dtype=np.uint8))

    def test_from_float_rounds_half_to_even_and_clamps(self):
        arr = np.array([[[-3.0, 127.5, 128.5], [255.9, 300.0, 149.4]]])
        img = ImageBuffer.from_float(arr)
        assert img.pixels.tolist() == [[[0, 128, 128], [255, 255, 149]]]

    def test_uniform_and_properties(self):
        img = ImageBuffer.uniform(5, 3, (10, 20, 30))
        assert (img.width, img.height) == (5, 3)
        assert (img.pixels == (10, 20, 30)).all()

    def test_with_meta_keeps_pixels(self):
        img = ImageBuffer.uniform(2, 2, (1, 2, 3)).with_meta(frame_id="f0")
        assert img.meta["frame_id"] == "f0"
        assert img.pixels[0, 0].tolist() == [1, 2, 3]


class TestChannels:
    def test_luma_weights(self):
        white = ImageBuffer.uniform(3, 3, (255, 255, 255))
        assert to_luma(white) == pytest.approx(np.full((3, 3), 255.0))
        red = ImageBuffer.uniform(2, 2, (100, 0, 0))
        assert to_luma(red)[0, 0] == pytest.approx(29.9)

    def test_saturation_channel(self):
        gray = ImageBuffer.uniform(2, 2, (77, 77, 77))
        assert (saturation_channel(gray) == 0.0).all()
        red = ImageBuffer.uniform(2, 2, (200, 0, 0))
        assert (saturation_channel(red) == 1.0).all()
        black = ImageBuffer.uniform(2, 2, (0, 0, 0))
        assert (saturation_channel(black) == 0.0).all()


class TestKnobTransforms:
    def test_factor_one_is_bit_exact_identity(self, random_images):
        for img in random_images(20):
            for knob in KNOB_NAMES:
                out = apply_knob(img, knob, 1.0)
                assert np.array_equal(out.pixels, img.pixels)

    def test_brightness_uniform_gray(self):
        img = ImageBuffer.uniform(8, 6, (100, 100, 100))
        out = apply_knob(img, "brightness", 1.5)
        assert (out.pixels == 150).all()

    @pytest.mark.parametrize("knob", KNOB_NAMES)
    @pytest.mark.parametrize("factor", [0.0, 0.4, 1.0, 1.7])
    def test_matches_loop_oracle(self, knob, factor):
        img = textured_image(width=20, height=14, seed=11)
        expected = oracle_apply_knob(img, knob, factor)
        out = apply_knob(img, knob, factor)
        assert np.array_equal(out.pixels, expected)

    def test_saturation_zero_gives_grayscale(self, texture):
        out = apply_knob(texture, "color_saturation", 0.0)
        px = out.pixels
        assert np.array_equal(px[:, :, 0], px[:, :, 1])
        assert np.array_equal(px[:, :, 1], px[:, :, 2])

    def test_gray_images_are_saturation_fixed_points(self):
        rng = np.random.default_rng(5)
        gray = np.repeat(
            rng.integers(0, 256, size=(10, 12, 1), dtype=np.uint8), 3, axis=2
        )
        img = ImageBuffer(gray)
        for factor in (0.0, 0.3, 1.0, 2.0, 5.0):
            out = apply_knob(img, "color_saturation", factor)
            assert np.array_equal(out.pixels, img.pixels)

    def test_uniform_gray_is_contrast_fixed_point(self):
        # Contrast blends toward the mean luma, so the fixed point is a
        # uniform image whose pixel value equals that mean: uniform gray.
        img = ImageBuffer.uniform(9, 7, (117, 117, 117))
        for factor in (0.0, 0.5, 1.0, 2.5):
            out = apply_knob(img, "contrast", factor)
            assert np.array_equal(out.pixels, img.pixels)

    def test_uniform_images_are_sharpness_fixed_points(self):
        img = ImageBuffer.uniform(9, 7, (83, 150, 41))
        for factor in (0.0, 0.5, 1.0, 2.5):
            out = apply_knob(img, "sharpness", factor)
            assert np.array_equal(out.pixels, img.pixels)

    def test_uniform_stays_uniform_under_any_config(self):
        img = ImageBuffer.uniform(9, 7, (83, 150, 41))
        config = KnobConfig(
            brightness=1.3, contrast=0.7, color_saturation=1.5, sharpness=1.4
        )
        out = apply_config(img, config)
        assert (out.pixels == out.pixels[0, 0]).all()
        # The sharpness component is the identity on constant images.
        no_sharp = apply_config(img, KnobConfig(1.3, 0.7, 1.5, 1.0))
        assert np.array_equal(out.pixels, no_sharp.pixels)

    def test_brightness_mean_luma_monotone(self, texture):
        factors = [0.0, 0.3, 0.6, 1.0, 1.3, 1.6, 2.5]
        means = [
            to_luma(apply_knob(texture, "brightness", f)).mean() for f in factors
        ]
        assert all(a <= b + 1e-9 for a, b in zip(means, means[1:]))

    def test_any_nonnegative_factor_stays_in_range(self, random_images):
        rng = np.random.default_rng(99)
        for img in random_images(5):
            for knob in KNOB_NAMES:
                factor = float(rng.uniform(0.0, 10.0))
                out = apply_knob(img, knob, factor)
                assert out.pixels.dtype == np.uint8
                assert out.pixels.min() >= 0 and out.pixels.max() <= 255

    def test_rejects_bad_inputs(self, texture):
        with pytest.raises(ValueError):
            apply_knob(texture, "brightness", -0.1)
        with pytest.raises(ValueError):
            apply_knob(texture, "brightness", float("nan"))
        with pytest.raises(ValueError):
            apply_knob(texture, "hue", 1.0)

    def test_meta_propagates(self, texture):
        tagged = texture.with_meta(frame_id="abc")
        out = apply_knob(tagged, "contrast", 1.2)
        assert out.meta["frame_id"] == "abc"
        out2 = apply_config(tagged, KnobConfig(brightness=1.2))
        assert out2.meta["frame_id"] == "abc"


class TestApplyConfig:
    def test_identity_config_is_bit_exact(self, texture):
        out = apply_config(texture, KnobConfig())
        assert np.array_equal(out.pixels, texture.pixels)

    def test_composition_order(self, texture):
        config = KnobConfig(
            brightness=1.2, contrast=0.8, color_saturation=1.4, sharpness=1.3
        )
        expected = texture
        for knob in KNOB_NAMES:
            expected = apply_knob(expected, knob, config.value_of(knob))
        out = apply_config(texture, config)
        assert np.array_equal(out.pixels, expected.pixels)


class TestKnobConfig:
    def test_defaults_identity(self):
        assert KnobConfig().as_tuple() == (1.0, 1.0, 1.0, 1.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            KnobConfig(brightness=-0.5)

    def test_clamped(self):
        cfg = KnobConfig(brightness=2.5, contrast=0.1, color_saturation=1.0).clamped()
        assert cfg.brightness == KNOB_RANGES["brightness"][1]
        assert cfg.contrast == KNOB_RANGES["contrast"][0]
        assert cfg.color_saturation == 1.0

    def test_with_value_and_tuple_round_trip(self):
        cfg = KnobConfig().with_value("sharpness", 1.5)
        assert cfg.sharpness == 1.5
        assert KnobConfig.from_tuple(cfg.as_tuple()) == cfg


class TestConvolve:
    def test_mean_kernel_on_uniform_is_identity(self):
        img = ImageBuffer.uniform(7, 5, (120, 33, 210))
        kernel = np.full((3, 3), 1.0 / 9.0)
        out = convolve3x3(img, kernel)
        assert np.array_equal(out.pixels, img.pixels)

    def test_matches_loop_oracle_with_edge_replication(self):
        img = textured_image(width=12, height=9, seed=3)
        rng = np.random.default_rng(8)
        kernel = rng.uniform(-0.2, 0.4, size=(3, 3))
        out = convolve3x3(img, kernel)
        for c in range(3):
            expected = oracle_convolve3x3(
                img.pixels[:, :, c].astype(np.float64), kernel
            )
            expected8 = np.clip(np.rint(expected), 0, 255).astype(np.uint8)
            assert np.array_equal(out.pixels[:, :, c], expected8)

    def test_rejects_wrong_kernel_shape(self, texture):
        with pytest.raises(ValueError):
            convolve3x3(texture, np.ones((2, 2)))


class TestFileIO:
    def test_ppm_round_trip_bit_exact(self, tmp_path, random_images):
        (img,) = random_images(1)
        path = tmp_path / "frame.ppm"
        write_ppm(path, img)
        back = read_ppm(path)
        assert np.array_equal(back.pixels, img.pixels)

    def test_ppm_golden_bytes(self, tmp_path):
        img = ImageBuffer(np.array([[[1, 2, 3], [4, 5, 6]]], dtype=np.uint8))
        path = tmp_path / "tiny.ppm"
        write_ppm(path, img)
        assert path.read_bytes() == b"P6\n2 1\n255\n\x01\x02\x03\x04\x05\x06"

    def test_ppm_accepts_comments(self, tmp_path):
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# a comment\n2 1\n255\n\x01\x02\x03\x04\x05\x06")
        img = read_ppm(path)
        assert img.pixels.tolist() == [[[1, 2, 3], [4, 5, 6]]]

    def test_ppm_rejects_bad_files(self, tmp_path):
        bad_magic = tmp_path / "bad.ppm"
        bad_magic.write_bytes(b"P5\n2 1\n255\n\x00\x00")
        with pytest.raises(ValueError):
            read_ppm(bad_magic)
        truncated = tmp_path / "short.ppm"
        truncated.write_bytes(b"P6\n2 2\n255\n\x01\x02")
        with pytest.raises(ValueError):
            read_ppm(truncated)

    def test_png_round_trip_bit_exact(self, tmp_path, random_images):
        (img,) = random_images(1)
        path = tmp_path / "frame.png"
        write_png(path, img)
        back = read_png(path)
        assert np.array_equal(back.pixels, img.pixels)

    def test_png_bytes_round_trip(self, tmp_path, texture):
        data = png_bytes(texture)
        path = tmp_path / "x.png"
        path.write_bytes(data)
        assert np.array_equal(read_png(path).pixels, texture.pixels)

    def test_read_image_dispatch(self, tmp_path, texture):
        ppm = tmp_path / "a.ppm"
        write_ppm(ppm, texture)
        assert np.array_equal(read_image(ppm).pixels, texture.pixels)
        with pytest.raises(ValueError):
            read_image(tmp_path / "a.bmp")
