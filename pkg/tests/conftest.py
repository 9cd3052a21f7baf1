import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_probmaps(rng, num_labels, h, w):
    raw = rng.random((num_labels, h, w)) + 1e-3
    return raw / raw.sum(axis=0, keepdims=True)


def random_image(rng, h, w):
    return rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
