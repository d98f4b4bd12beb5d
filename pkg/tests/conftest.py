import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from monadkin.grid import PhysicalParams, make_grid

settings.register_profile(
    "monadkin",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("monadkin")


@pytest.fixture
def params():
    return PhysicalParams()


@pytest.fixture
def line():
    """Periodic 1-D grid wide enough for unit Gaussians."""
    return make_grid(1, 512, 20.0)


def gauss_values(x, sigma=1.0, x0=0.0, k=0.0):
    return np.exp(-((x - x0) ** 2) / (4.0 * sigma**2) + 1j * k * x)
