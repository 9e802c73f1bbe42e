import io

import numpy as np
import pytest
from PIL import Image

from sldscreen.images import RasterImage


def encode(pixels: np.ndarray, fmt: str = "PNG", mode=None) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(pixels, mode=mode).save(buf, fmt)
    return buf.getvalue()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def page_image(rng):
    """A small handwriting-page-like scan: light background, dark strokes."""
    px = np.full((48, 64, 3), 240, np.uint8)
    ys = rng.integers(4, 44, size=120)
    xs = rng.integers(4, 60, size=120)
    px[ys, xs] = 30
    return RasterImage(px)
