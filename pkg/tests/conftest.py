import numpy as np
import pytest

from gfridge.experiments import ExperimentConfig, generate_design


def random_design(n, p, seed=0, dist="gaussian", rho=0.0):
    return generate_design(ExperimentConfig(dist=dist, n=n, p=p, rho=rho, seed=seed))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tall():
    """A full-rank 30 x 8 Gaussian design."""
    return random_design(30, 8, seed=3)


@pytest.fixture
def wide():
    """A rank-deficient 8 x 20 Gaussian design."""
    return random_design(8, 20, seed=4)
