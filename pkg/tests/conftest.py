import numpy as np
import pytest

from turbrestore import make_rng


def random_image(seed, h, w, c=1):
    return make_rng(seed).uniform(0.0, 1.0, size=(h, w, c))


@pytest.fixture
def rng():
    return make_rng(0)
