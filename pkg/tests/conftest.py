import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sscodec import init_weights, small_config

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_weights():
    return init_weights(small_config(), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
