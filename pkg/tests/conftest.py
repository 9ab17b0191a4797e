import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import routhkit  # noqa: F401

settings.register_profile("routhkit", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("routhkit")


@functools.lru_cache(maxsize=None)
def scenario(name: str):
    from routhkit.scenarios import build_scenario

    return build_scenario(name)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
