"""Pixel-level primitives: images, boxes, resize, crop, color conversion.

Images are 8-bit RGB held row-major in a numpy array; every transform
returns a new image and leaves its input untouched, so values can be
shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCrop


@dataclass(frozen=True)
class RasterImage:
    """Decoded RGB image. ``pixels`` has shape (height, width, 3), dtype uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("pixels must have shape (h, w, 3)")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not px.flags["C_CONTIGUOUS"]:
            px = np.ascontiguousarray(px)
        object.__setattr__(self, "pixels", px)
        px.setflags(write=False)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return 3

    def tobytes(self) -> bytes:
        """Row-major interleaved RGB buffer, length width*height*3."""
        return self.pixels.tobytes()

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "RasterImage":
        if len(data) != width * height * 3:
            raise ValueError("buffer length must be width*height*3")
        arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
        return cls(arr.copy())

    @classmethod
    def full(cls, width: int, height: int, color=(0, 0, 0)) -> "RasterImage":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:, :] = np.asarray(color, dtype=np.uint8)
        return cls(arr)

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )


@dataclass(frozen=True, order=True)
class PixelBox:
    """Axis-aligned box: (top, left) inclusive, (bottom, right) exclusive."""

    top: int
    left: int
    bottom: int
    right: int

    def __post_init__(self):
        if self.bottom <= self.top or self.right <= self.left:
            raise ValueError(f"box has non-positive extent: {self}")

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def height(self) -> int:
        return self.bottom - self.top

    @property
    def area(self) -> int:
        return self.width * self.height

    def clamp(self, width: int, height: int) -> "PixelBox | None":
        """Intersect with an image of the given size; None if nothing is left."""
        t = max(self.top, 0)
        l = max(self.left, 0)
        b = min(self.bottom, height)
        r = min(self.right, width)
        if b <= t or r <= l:
            return None
        return PixelBox(t, l, b, r)

    def as_list(self) -> list[int]:
        return [self.top, self.left, self.bottom, self.right]


def resize(img: RasterImage, out_w: int, out_h: int) -> RasterImage:
    """Bilinear resize with half-pixel-centered sampling (plain stretch).

    Source coordinate for destination index d is (d + 0.5) * scale - 0.5,
    clamped to the source range; same-size calls are pixel-identical.
    Float results are quantized by round-half-up.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    if out_w == img.width and out_h == img.height:
        return RasterImage(img.pixels.copy())

    src = img.pixels.astype(np.float64)
    h, w = img.height, img.width

    def axis_coords(out_n: int, src_n: int):
        scale = src_n / out_n
        pos = (np.arange(out_n, dtype=np.float64) + 0.5) * scale - 0.5
        pos = np.clip(pos, 0.0, src_n - 1.0)
        i0 = np.floor(pos).astype(np.int64)
        i1 = np.minimum(i0 + 1, src_n - 1)
        frac = pos - i0
        return i0, i1, frac

    y0, y1, fy = axis_coords(out_h, h)
    x0, x1, fx = axis_coords(out_w, w)

    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]

    out = np.floor(out + 0.5)
    return RasterImage(np.clip(out, 0, 255).astype(np.uint8))


def crop(img: RasterImage, box: PixelBox) -> RasterImage:
    """Copy the sub-image under ``box``, clamped to the image bounds."""
    clamped = box.clamp(img.width, img.height)
    if clamped is None:
        raise EmptyCrop(f"box {box} does not intersect a {img.width}x{img.height} image")
    region = img.pixels[clamped.top:clamped.bottom, clamped.left:clamped.right]
    return RasterImage(region.copy())


def rgb_to_hsv(pixel) -> tuple[float, float, float]:
    """Standard hexcone conversion: hue in degrees [0, 360), s and v in [0, 1]."""
    r, g, b = (float(c) / 255.0 for c in pixel)
    mx = max(r, g, b)
    mn = min(r, g, b)
    delta = mx - mn
    if delta == 0.0:
        h = 0.0
    elif mx == r:
        h = 60.0 * (((g - b) / delta) % 6.0)
    elif mx == g:
        h = 60.0 * ((b - r) / delta + 2.0)
    else:
        h = 60.0 * ((r - g) / delta + 4.0)
    s = 0.0 if mx == 0.0 else delta / mx
    return h, s, mx


def rgb_to_hsv_array(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized rgb_to_hsv over an (..., 3) uint8 array."""
    rgb = pixels.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = np.max(rgb, axis=-1)
    mn = np.min(rgb, axis=-1)
    delta = mx - mn
    safe = np.where(delta == 0.0, 1.0, delta)
    h = np.where(
        mx == r,
        ((g - b) / safe) % 6.0,
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    h = np.where(delta == 0.0, 0.0, h * 60.0)
    s = np.where(mx == 0.0, 0.0, delta / np.where(mx == 0.0, 1.0, mx))
    return h, s, mx


def hsv_to_rgb(h: float, s: float, v: float) -> tuple[int, int, int]:
    """Inverse hexcone conversion, quantized round-half-up to 8-bit."""
    h = h % 360.0
    c = v * s
    x = c * (1.0 - abs((h / 60.0) % 2.0 - 1.0))
    m = v - c
    sector = int(h // 60.0) % 6
    rp, gp, bp = [
        (c, x, 0.0), (x, c, 0.0), (0.0, c, x),
        (0.0, x, c), (x, 0.0, c), (c, 0.0, x),
    ][sector]
    return tuple(int(np.floor((ch + m) * 255.0 + 0.5)) for ch in (rp, gp, bp))
