import numpy as np
import pytest
from scipy.integrate import quad

from vpfp.core import (
    PhaseGrid,
    SolverConfig,
    current,
    delinearize_index,
    density,
    linearize_index,
)


def test_grid_spacings():
    grid = PhaseGrid(n_x=16, l_v=6.0, n_v=64, d=1, x_min=0.0, x_max=1.0)
    assert grid.dx == pytest.approx(1.0 / 16)
    assert grid.dv == pytest.approx(12.0 / 64)
    assert grid.x[0] == pytest.approx(grid.dx)
    assert grid.x[-1] == pytest.approx(1.0)
    v = grid.v_axis
    assert v[0] == pytest.approx(-6.0 + grid.dv / 2)
    assert v[-1] == pytest.approx(6.0 - grid.dv / 2)


def test_grid_validation():
    with pytest.raises(ValueError):
        PhaseGrid(n_x=4, l_v=1.0, n_v=8, d=4)
    with pytest.raises(ValueError):
        PhaseGrid(n_x=0, l_v=1.0, n_v=8)


def test_density_zero_and_constant():
    grid = PhaseGrid(n_x=3, l_v=5.0, n_v=64, d=1)
    assert np.all(density(np.zeros((3, 64)), grid) == 0.0)
    # constant f = 1 integrates to the domain length 2 L_v = 10
    rho = density(np.ones((3, 64)), grid)
    assert rho == pytest.approx([10.0, 10.0, 10.0])


def test_density_matches_analytic_two_stream_profile():
    # rho0(x) = sqrt(2 pi) (2 + cos 2 pi x) against the midpoint sum of its
    # two-Maxwellian distribution; tolerance = midpoint + Gaussian tail error,
    # frozen from an independent quadrature of one velocity profile.
    grid = PhaseGrid(n_x=16, l_v=6.0, n_v=64, d=1, x_min=0.0, x_max=1.0)
    rho0 = np.sqrt(2 * np.pi) * (2.0 + np.cos(2 * np.pi * grid.x))
    v = grid.v_axis[None, :]
    f0 = rho0[:, None] / (2 * np.sqrt(2 * np.pi)) * (
        np.exp(-((v + 1.5) ** 2) / 2) + np.exp(-((v - 1.5) ** 2) / 2)
    )
    profile = lambda w: (np.exp(-((w + 1.5) ** 2) / 2) + np.exp(-((w - 1.5) ** 2) / 2)) / (
        2 * np.sqrt(2 * np.pi)
    )
    exact_unit, _ = quad(profile, -6, 6)
    quad_defect = abs(
        float(profile(grid.v_axis).sum() * grid.dv) - exact_unit
    ) + abs(exact_unit - 1.0)
    assert quad_defect < 1e-5
    assert np.abs(density(f0, grid) - rho0).max() <= rho0.max() * (quad_defect + 1e-12)


def test_current_symmetry_and_zero():
    grid = PhaseGrid(n_x=2, l_v=5.0, n_v=64, d=1)
    f_even = np.tile(np.exp(-grid.v_axis**2), (2, 1))
    assert np.abs(current(f_even, grid)).max() < 1e-14
    assert np.all(current(np.zeros((2, 64)), grid) == 0.0)


def test_current_shifted_gaussian():
    # J ~ rho * c for a Maxwellian drifting at c; oracle: 1e6-point quadrature
    grid = PhaseGrid(n_x=1, l_v=6.0, n_v=64, d=1)
    c = 0.8
    f = np.exp(-((grid.v_axis - c) ** 2) / 2)[None, :]
    w = np.linspace(-6, 6, 1_000_001)
    f_w = np.exp(-((w - c) ** 2) / 2)
    rho_ref = np.trapezoid(f_w, w)
    j_ref = np.trapezoid(w * f_w, w)
    rho = density(f, grid)[0]
    j = current(f, grid)[0, 0]
    assert j == pytest.approx(j_ref, rel=1e-6)
    assert j / rho == pytest.approx(j_ref / rho_ref, rel=1e-6)


def test_moments_linear_in_f(rng):
    grid = PhaseGrid(n_x=4, l_v=3.0, n_v=8, d=2)
    f1 = rng.uniform(size=(4, 8, 8))
    f2 = rng.uniform(size=(4, 8, 8))
    a, b = 2.5, -1.25
    assert np.allclose(
        density(a * f1 + b * f2, grid), a * density(f1, grid) + b * density(f2, grid)
    )
    assert np.allclose(
        current(a * f1 + b * f2, grid), a * current(f1, grid) + b * current(f2, grid)
    )


def test_linearize_examples():
    assert linearize_index((1, 1, 1), 5) == 1
    assert linearize_index((3, 2), 4) == 7
    with pytest.raises(IndexError):
        linearize_index((0, 1), 4)
    with pytest.raises(IndexError):
        delinearize_index(65, 4, 3)


@pytest.mark.parametrize("d,n_v", [(1, 8), (2, 6), (3, 5)])
def test_index_round_trip_exhaustive(d, n_v):
    for j in range(1, n_v**d + 1):
        multi = delinearize_index(j, n_v, d)
        assert linearize_index(multi, n_v) == j


def test_flatten_matches_linearization():
    grid = PhaseGrid(n_x=2, l_v=1.0, n_v=3, d=2)
    f = np.zeros((2, 3, 3))
    f[1, 2, 1] = 7.0  # one-based (j1, j2) = (3, 2)
    flat = grid.flatten_v(f)
    j = linearize_index((3, 2), 3)
    assert flat[1, j - 1] == 7.0
    assert np.array_equal(grid.unflatten_v(flat), f)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(theta=0.6)
    with pytest.raises(ValueError):
        SolverConfig(delta=0.0)
    with pytest.raises(ValueError):
        SolverConfig(eps=np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        SolverConfig(algorithm="bogus")
    cfg = SolverConfig(eps=np.array([1.0, 0.5]))
    assert np.allclose(cfg.eps_at(2), [1.0, 0.5])
    with pytest.raises(ValueError):
        cfg.eps_at(3)
