import numpy as np
import pytest

from extremal_domains.geometry import flat_torus, normal_metric, round_sphere
from extremal_domains.grids import PolarDiskGrid
from extremal_domains.nonlinearity import constant_one
from extremal_domains.radial_profile import solve_radial_profile


@pytest.fixture(scope="session")
def origin():
    return np.array([0.0, 0.0])


@pytest.fixture(scope="session")
def torus():
    return flat_torus()


@pytest.fixture(scope="session")
def sphere():
    return round_sphere(1.0)


@pytest.fixture(scope="session")
def disk_grid():
    return PolarDiskGrid(20, 32)


@pytest.fixture(scope="session")
def flat_profile(origin):
    return solve_radial_profile(constant_one(), origin, 2, 1.0)


@pytest.fixture(scope="session")
def flat_nm(torus, origin):
    return normal_metric(torus, origin, 0.1, n_theta=32, n_radial=12)


@pytest.fixture(scope="session")
def flat_nm0(torus, origin):
    """Blow-up limit metric (identity for every chart)."""
    return normal_metric(torus, origin, 0.0, n_theta=32, n_radial=8)
