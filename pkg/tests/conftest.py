import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_masks(rng, shape):
    return (rng.random(shape) < 0.5).astype(np.float64)


def random_cube(rng, shape):
    return rng.random(shape)
