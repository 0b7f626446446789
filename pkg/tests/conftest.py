import numpy as np
import pytest

from ultratraj.synthetic import LinearCFSpec, generate_linear_cf_dataset


@pytest.fixture
def cf_dataset():
    """Forty 100-record car-following trajectories from the linear law."""
    return generate_linear_cf_dataset(40, seed=7, spec=LinearCFSpec(n_points=100))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
