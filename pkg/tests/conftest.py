import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from .helpers import table1_params

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def table1():
    return table1_params()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
