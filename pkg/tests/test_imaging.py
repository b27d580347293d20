import colorsys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parascope.errors import EmptyCrop
from parascope.imaging import (
    PixelBox,
    RasterImage,
    crop,
    hsv_to_rgb,
    resize,
    rgb_to_hsv,
)


class TestRasterImage:
    def test_buffer_length_invariant(self):
        img = RasterImage.from_bytes(2, 3, bytes(18))
        assert (img.width, img.height, img.channels) == (2, 3, 3)
        assert len(img.tobytes()) == 18

    def test_rejects_wrong_buffer_length(self):
        with pytest.raises(ValueError):
            RasterImage.from_bytes(2, 2, bytes(6))

    def test_rejects_zero_dimension(self):
        with pytest.raises(ValueError):
            RasterImage(np.zeros((0, 4, 3), dtype=np.uint8))

    def test_immutable_pixels(self):
        img = RasterImage.full(2, 2)
        with pytest.raises(ValueError):
            img.pixels[0, 0] = 1


class TestPixelBox:
    def test_area(self):
        assert PixelBox(0, 0, 10, 10).area == 100

    def test_rejects_inverted(self):
        with pytest.raises(ValueError):
            PixelBox(5, 0, 5, 10)

    def test_clamp_outside_is_none(self):
        assert PixelBox(10, 10, 20, 20).clamp(5, 5) is None

    def test_clamp_partial(self):
        assert PixelBox(-2, -2, 3, 3).clamp(10, 10) == PixelBox(0, 0, 3, 3)


class TestResize:
    def test_output_dims_320(self):
        img = RasterImage.full(640, 480, (10, 20, 30))
        out = resize(img, 320, 320)
        assert (out.width, out.height) == (320, 320)

    def test_identity_same_dims(self, checker_image):
        out = resize(checker_image, 4, 4)
        assert out == checker_image

    def test_constant_field_stays_constant(self):
        img = RasterImage.full(100, 100, (128, 128, 128))
        out = resize(img, 320, 320)
        assert (out.pixels == 128).all()

    def test_2x_upscale_of_2x1_gradient(self):
        # Half-pixel centers: dst x=0 -> src -0.25 (clamped 0), x=3 -> 1.25
        # (clamped 1), x=1 -> 0.25, x=2 -> 0.75.
        img = RasterImage.from_bytes(2, 1, bytes([0, 0, 0, 100, 100, 100]))
        out = resize(img, 4, 1)
        assert out.pixels[0, :, 0].tolist() == [0, 25, 75, 100]

    def test_rejects_zero_output(self):
        with pytest.raises(ValueError):
            resize(RasterImage.full(4, 4), 0, 4)


class TestCrop:
    def test_full_box_identity(self, checker_image):
        assert crop(checker_image, PixelBox(0, 0, 4, 4)) == checker_image

    def test_interior_indices(self, checker_image):
        out = crop(checker_image, PixelBox(1, 1, 3, 3))
        assert (out.width, out.height) == (2, 2)
        # pixel(0,0) of the crop is source pixel (1,1): value (1*16+1, 1, 1)
        assert tuple(out.pixels[0, 0]) == (17, 1, 1)
        assert tuple(out.pixels[1, 1]) == (2 * 16 + 2, 2, 2)

    def test_out_of_range_clamped(self, checker_image):
        out = crop(checker_image, PixelBox(-5, -5, 2, 2))
        assert (out.width, out.height) == (2, 2)

    def test_fully_outside_raises(self, checker_image):
        with pytest.raises(EmptyCrop):
            crop(checker_image, PixelBox(10, 10, 20, 20))

    def test_composition(self, checker_image):
        inner = crop(crop(checker_image, PixelBox(1, 1, 4, 4)), PixelBox(1, 1, 3, 3))
        direct = crop(checker_image, PixelBox(2, 2, 4, 4))
        assert inner == direct


class TestColorConversion:
    @pytest.mark.parametrize("rgb,expected", [
        ((255, 0, 0), (0.0, 1.0, 1.0)),
        ((0, 0, 0), (0.0, 0.0, 0.0)),
        ((255, 255, 255), (0.0, 0.0, 1.0)),
    ])
    def test_known_values(self, rgb, expected):
        h, s, v = rgb_to_hsv(rgb)
        assert (h, s) == (expected[0], expected[1])
        assert v == pytest.approx(expected[2])

    def test_purple_by_hand(self):
        h, s, v = rgb_to_hsv((128, 0, 128))
        assert h == pytest.approx(300.0)
        assert s == pytest.approx(1.0)
        assert v == pytest.approx(128 / 255)

    @given(st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)))
    def test_matches_colorsys(self, rgb):
        h, s, v = rgb_to_hsv(rgb)
        eh, es, ev = colorsys.rgb_to_hsv(*(c / 255 for c in rgb))
        assert h / 360.0 == pytest.approx(eh % 1.0, abs=1e-9)
        assert s == pytest.approx(es, abs=1e-9)
        assert v == pytest.approx(ev, abs=1e-9)

    @given(st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)))
    @settings(max_examples=200)
    def test_round_trip_within_one(self, rgb):
        back = hsv_to_rgb(*rgb_to_hsv(rgb))
        assert all(abs(a - b) <= 1 for a, b in zip(rgb, back))
