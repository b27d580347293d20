"""Input validation helpers shared by the estimator-style backends."""

from __future__ import annotations

from .errors import WrongInputSize
from .imaging import RasterImage


def check_image(img, expected_size: tuple[int, int] | None = None) -> RasterImage:
    """Validate an image argument; ``expected_size`` is (width, height)."""
    if not isinstance(img, RasterImage):
        raise TypeError(f"expected RasterImage, got {type(img).__name__}")
    if expected_size is not None and (img.width, img.height) != expected_size:
        raise WrongInputSize(
            f"expected {expected_size[0]}x{expected_size[1]} input, "
            f"got {img.width}x{img.height}"
        )
    return img


def check_unit(value: float, name: str) -> float:
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return v


def check_open_unit(value: float, name: str) -> float:
    v = float(value)
    if not 0.0 < v < 1.0:
        raise ValueError(f"{name} must be in (0, 1), got {value}")
    return v
