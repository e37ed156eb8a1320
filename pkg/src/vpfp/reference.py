"""Independent cross-validation solvers (test/experiment use only).

* a fully explicit, resolved kinetic solver: RK2 in time, MUSCL transport
  in x, conservative center-difference Fokker-Planck fluxes in v with
  zero-flux boundaries;
* a first-order upwind solver for the vanishing-eps density limit
  ``d_t rho = d_x(rho d_x phi)`` closed by the spectral Poisson solve.

Both are deliberately simple and conserve mass to machine precision.
"""

from __future__ import annotations

import numpy as np

from .core import PhaseGrid, SolverConfig, density
from .poisson import solve_poisson
from .transport import _interface_flux


def explicit_stability_limit(grid: PhaseGrid, eps_min: float) -> float:
    """Largest tau the explicit solver accepts: advection + velocity diffusion."""
    return min(grid.dx / grid.l_v, eps_min * grid.dv**2 / 2.0)


def _fokker_planck_divergence(f: np.ndarray, grad_phi: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Center-difference ``d_v((v + grad_phi) f + d_v f)`` with zero boundary flux."""
    dv = grid.dv
    v_half = -grid.l_v + dv * np.arange(1, grid.n_v)  # interior interfaces
    drift = v_half[None, :] + grad_phi[:, None]
    g = np.zeros((f.shape[0], grid.n_v + 1))
    g[:, 1:-1] = drift * 0.5 * (f[:, :-1] + f[:, 1:]) + (f[:, 1:] - f[:, :-1]) / dv
    return (g[:, 1:] - g[:, :-1]) / dv


def explicit_vpfp_step(
    f: np.ndarray,
    config: SolverConfig,
    grid: PhaseGrid,
    *,
    tau: float | None = None,
) -> np.ndarray:
    """One RK2 step of the full kinetic system (d = 1 only)."""
    if grid.d != 1:
        raise ValueError("explicit reference solver is one dimensional")
    tau = config.tau if tau is None else tau
    eps = config.eps_at(grid.n_x)
    limit = explicit_stability_limit(grid, float(eps.min()))
    if tau > limit:
        raise ValueError(f"explicit solver unstable: tau={tau:g} exceeds {limit:g}")

    h = config.background_on(grid) if config.mode == "vpfp" else None
    v = grid.v_axis[None, :]

    def rhs(g: np.ndarray) -> np.ndarray:
        if config.mode == "vpfp":
            _, dphi = solve_poisson(density(g, grid), h, grid)
        elif config.mode == "vfp":
            dphi = np.asarray(config.external_potential_grad(grid.x))
        else:
            dphi = np.zeros(grid.n_x)
        flux = _interface_flux(g, v)
        conv = -(flux - np.roll(flux, 1, axis=0)) / grid.dx
        return conv + _fokker_planck_divergence(g, dphi, grid) / eps[:, None]

    k1 = rhs(f)
    k2 = rhs(f + tau * k1)
    return f + 0.5 * tau * (k1 + k2)


def high_field_limit_step(
    rho: np.ndarray, h: np.ndarray, grid: PhaseGrid, tau: float
) -> np.ndarray:
    """One upwind finite-volume step of the limiting density convection."""
    _, dphi = solve_poisson(rho, h, grid)
    a = -dphi
    courant = tau * np.abs(a).max() / grid.dx
    if courant > 1.0:
        raise ValueError(f"limit solver CFL violated: Courant {courant:.3f} > 1")
    a_half = 0.5 * (a + np.roll(a, -1))
    flux = np.maximum(a_half, 0.0) * rho + np.minimum(a_half, 0.0) * np.roll(rho, -1)
    return rho - (tau / grid.dx) * (flux - np.roll(flux, 1))
