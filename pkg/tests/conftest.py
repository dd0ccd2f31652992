import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def weights(min_dim=1, max_dim=6):
    """Non-negative weight vectors with at least one clearly positive entry."""
    return st.integers(min_dim, max_dim).flatmap(
        lambda n: arrays(np.float64, n, elements=st.floats(0.0, 1.0, allow_subnormal=False))
    ).filter(lambda a: a.sum() > 1e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
