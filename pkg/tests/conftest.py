import numpy as np
import pytest

from tsadv.data import make_synthetic, znormalize_dataset
from tsadv.model import Model, ModelConfig, TrainConfig, train


def finite_diff(f, x, h=1e-5):
    """Central finite differences of a scalar function over a flat array."""
    g = np.zeros_like(x, dtype=np.float64)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def rel_error(analytic, numeric):
    denom = max(np.linalg.norm(numeric), 1e-12)
    return np.linalg.norm(analytic - numeric) / denom


@pytest.fixture(scope="session")
def tiny_model():
    """A quickly trained 3-class model on T=32 bump data, for unit tests."""
    tr = znormalize_dataset(make_synthetic("shifted-gaussian-bumps", 12, 32, 0.1, seed=3))
    te = znormalize_dataset(make_synthetic("shifted-gaussian-bumps", 6, 32, 0.1, seed=4,
                                           split="test"))
    model, _ = train(tr, ModelConfig(3, 32, seed=0),
                     TrainConfig(epochs=40, learning_rate=0.5, seed=0), te)
    return model, te


def random_model(rng, num_classes=3, input_length=16) -> Model:
    """An untrained model with random (non-zero) weights of moderate scale,
    for gradient-oracle checks."""
    config = ModelConfig(num_classes, input_length, conv_blocks=((4, 5), (4, 3)),
                         seed=0)
    model = Model.initialize(config)
    weights = {}
    for name, arr in model.weights.items():
        weights[name] = rng.normal(0.0, 0.7, arr.shape)
    return Model(config, weights)
