import random

import numpy as np
import pytest

from eagers.imaging import ImageBuffer


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)


def random_image(rng: random.Random, width: int, height: int) -> ImageBuffer:
    data = bytes(rng.randrange(256) for _ in range(width * height * 3))
    return ImageBuffer(width=width, height=height, pixels=data)


def solid_image(width: int, height: int, rgb: tuple[int, int, int]) -> ImageBuffer:
    arr = np.zeros((height, width, 3), dtype=np.uint8)
    arr[:, :] = rgb
    return ImageBuffer.from_array(arr)
