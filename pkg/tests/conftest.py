import numpy as np
import pytest

from vpfp.collision import local_maxwellian
from vpfp.core import PhaseGrid


@pytest.fixture
def homog_grid():
    """Velocity-only grid of the 1D double-bump benchmark."""
    return PhaseGrid(n_x=1, l_v=5.0, n_v=64, d=1)


@pytest.fixture
def double_bump(homog_grid):
    v = homog_grid.v_axis
    f0 = 2.0 * np.exp(-((v - 1.5) ** 2) / 1.2) + 0.5 * np.exp(-((v + 1.5) ** 2) / 1.5)
    rho = float(f0.sum() * homog_grid.dv)
    M = local_maxwellian(rho, 0.0, homog_grid)
    return f0, M, rho


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
