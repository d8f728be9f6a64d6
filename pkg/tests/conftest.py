import numpy as np
import pytest

from tobit_iht.model import CensoredDataset, Theta


def random_instance(rng, n_max=50, d_max=20, gamma_range=(0.2, 5.0)):
    """Random (theta, dataset) with mixed censoring and a dense delta."""
    n = int(rng.integers(4, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    feats = rng.standard_normal((n, d))
    delta = rng.standard_normal(d + 1) * 0.7
    gamma = float(rng.uniform(*gamma_range))
    y = np.maximum(rng.standard_normal(n) + feats @ rng.standard_normal(d) * 0.5, 0.0)
    y[0], y[1] = 0.0, 1.0 + abs(y[1])
    data = CensoredDataset.from_features(feats, y)
    return Theta(delta, gamma), data


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
