import numpy as np
import pytest

from csilab.channel import generate_samples


@pytest.fixture(scope="session")
def sample_batch():
    """Small shared corpus of precoder matrices (N=32, K=13)."""
    return generate_samples(24, seed=7)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
