import numpy as np
import pytest

from objectrl.imaging import ImageBuffer


def random_image(rng: np.random.Generator, width: int, height: int) -> ImageBuffer:
    return ImageBuffer(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
