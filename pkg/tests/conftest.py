import numpy as np
import pytest

from parascope.imaging import RasterImage
from parascope.synthetic import SyntheticSlideSpec, generate_synthetic_slide


@pytest.fixture
def checker_image():
    """4x4 numbered test pattern: pixel value encodes its position."""
    arr = np.zeros((4, 4, 3), dtype=np.uint8)
    for y in range(4):
        for x in range(4):
            arr[y, x] = (y * 16 + x, y, x)
    return RasterImage(arr)


@pytest.fixture
def white_320():
    return RasterImage.full(320, 320, (255, 255, 255))


@pytest.fixture(scope="session")
def default_slide():
    spec = SyntheticSlideSpec(seed=11, n_rbc=10, n_wbc=1, n_platelet=2,
                              parasitized_fraction=0.2)
    return spec, generate_synthetic_slide(spec)
