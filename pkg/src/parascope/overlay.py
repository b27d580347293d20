"""Result overlay rendering: class-colored rectangle outlines and labels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imaging import PixelBox, RasterImage

DEFAULT_COLORS = {
    "RBC": (0, 200, 0),
    "WBC": (220, 0, 0),
    "Platelet": (170, 0, 255),
    "Malaria": (128, 0, 128),
}


@dataclass(frozen=True)
class OverlayStyle:
    colors: dict = field(default_factory=lambda: dict(DEFAULT_COLORS))
    thickness: int = 2
    label_text: bool = False

    def color_for(self, label: str) -> tuple[int, int, int]:
        return self.colors.get(label, (255, 255, 0))


# 5x7 glyphs for the box labels and confidence, row-major bit strings.
_FONT = {
    "A": "01110 10001 10001 11111 10001 10001 10001",
    "B": "11110 10001 11110 10001 10001 10001 11110",
    "C": "01111 10000 10000 10000 10000 10000 01111",
    "E": "11111 10000 11110 10000 10000 10000 11111",
    "L": "10000 10000 10000 10000 10000 10000 11111",
    "M": "10001 11011 10101 10101 10001 10001 10001",
    "P": "11110 10001 11110 10000 10000 10000 10000",
    "R": "11110 10001 11110 10100 10010 10001 10001",
    "T": "11111 00100 00100 00100 00100 00100 00100",
    "W": "10001 10001 10001 10101 10101 11011 10001",
    "0": "01110 10001 10011 10101 11001 10001 01110",
    "1": "00100 01100 00100 00100 00100 00100 01110",
    "2": "01110 10001 00001 00110 01000 10000 11111",
    "3": "11110 00001 00001 01110 00001 00001 11110",
    "4": "00010 00110 01010 10010 11111 00010 00010",
    "5": "11111 10000 11110 00001 00001 10001 01110",
    "6": "01110 10000 11110 10001 10001 10001 01110",
    "7": "11111 00001 00010 00100 01000 01000 01000",
    "8": "01110 10001 01110 10001 10001 10001 01110",
    "9": "01110 10001 10001 01111 00001 00001 01110",
    "%": "11001 11010 00010 00100 01000 01011 10011",
    " ": "00000 00000 00000 00000 00000 00000 00000",
}


def _draw_rect(px: np.ndarray, box: PixelBox, color, thickness: int) -> None:
    h, w = px.shape[:2]
    clamped = box.clamp(w, h)
    if clamped is None:
        return
    t = max(1, thickness)
    c = np.asarray(color, dtype=np.uint8)
    top, left, bottom, right = clamped.top, clamped.left, clamped.bottom, clamped.right
    it, ib = min(top + t, bottom), max(bottom - t, top)
    il, ir = min(left + t, right), max(right - t, left)
    px[top:it, left:right] = c
    px[ib:bottom, left:right] = c
    px[top:bottom, left:il] = c
    px[top:bottom, ir:right] = c


def _draw_text(px: np.ndarray, text: str, row: int, col: int, color) -> None:
    h, w = px.shape[:2]
    c = np.asarray(color, dtype=np.uint8)
    x = col
    for ch in text.upper():
        glyph = _FONT.get(ch)
        if glyph is None:
            x += 6
            continue
        for dy, bits in enumerate(glyph.split()):
            for dx, bit in enumerate(bits):
                if bit == "1":
                    y, xx = row + dy, x + dx
                    if 0 <= y < h and 0 <= xx < w:
                        px[y, xx] = c
        x += 6


def render_overlay(
    img: RasterImage,
    boxes: list[tuple[PixelBox, str, float]],
    style: OverlayStyle | None = None,
) -> RasterImage:
    """Copy ``img`` with one outline per (box, label, score) entry.

    Boxes are drawn in ascending score order so the highest-score outline
    ends up on top; pixels strictly inside the innermost ring are never
    touched (labels, when enabled, render outside the box).
    """
    style = style or OverlayStyle()
    out = img.pixels.copy()
    for box, label, score in sorted(boxes, key=lambda e: e[2]):
        color = style.color_for(label)
        _draw_rect(out, box, color, style.thickness)
        if style.label_text:
            text = f"{label} {int(round(score * 100))}%"
            row = box.top - 8 if box.top >= 8 else box.bottom + 1
            _draw_text(out, text, row, max(box.left, 0), color)
    return RasterImage(out)
