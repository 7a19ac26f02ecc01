"""Shared fixtures: small normalized systems used across the suite."""

import numpy as np
import pytest

from vlasov_carleman import BeamSpec, GridSpec, PlasmaParams, gauss_ode


@pytest.fixture
def grid24():
    return GridSpec(n_x=2, n_v=4, x_max=1.0, v_max=1.0)


@pytest.fixture
def grid46():
    return GridSpec(n_x=4, n_v=6, x_max=2.0, v_max=3.0)


@pytest.fixture
def params_strong():
    """Normalized units with collisions strong enough for convergence."""
    return PlasmaParams.normalized(ncal=1.0, b=1.0, nu0=8.0)


@pytest.fixture
def ode24(params_strong, grid24):
    return gauss_ode(params_strong, grid24)


@pytest.fixture
def u24(params_strong, grid24):
    return params_strong.two_beam_initial(grid24, BeamSpec(j_beam=1))


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
