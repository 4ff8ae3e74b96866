import numpy as np
import pytest
from hypothesis import settings

from advcomp import ThreatModel
from advcomp.data import ImageBatch, gaussian_blobs, to_float32_grid
from advcomp.models import LinearModel, init_model

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")

EPS = 8 / 255


@pytest.fixture
def tm():
    return ThreatModel(EPS)


@pytest.fixture
def blobs():
    return gaussian_blobs(64, 8, 5, separation=0.3, std=0.1, seed=3)


@pytest.fixture
def mlp5():
    return init_model("mlp", 8, 5, hidden=(12,), activation="tanh", seed=11)


@pytest.fixture
def linear5():
    return init_model("linear", 8, 5, seed=12)


def binary_linear(w_diff=(1.0, -1.0), dim=2):
    """Two-class linear model whose margin direction is w_diff."""
    w = np.zeros((2, dim))
    w[0, : len(w_diff)] = w_diff
    return LinearModel(w, np.zeros(2))


def random_batch(n, dim, classes, seed=0, lo=0.05, hi=0.95):
    rng = np.random.default_rng(seed)
    x = to_float32_grid(rng.uniform(lo, hi, size=(n, dim)))
    y = rng.integers(classes, size=n)
    return ImageBatch(x, y, classes)
