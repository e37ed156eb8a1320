"""Error metrics, entropy functionals, and equilibrium constructions.

All L1-type metrics weight by the phase-space cell measure: ``dv^d`` for
velocity-only arrays, ``dx * dv^d`` when a spatial axis is present (arrays
are recognized by dimension: ``grid.d`` axes means velocity-only,
``grid.d + 1`` means x first).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import PhaseGrid


def _measure(f: np.ndarray, grid: PhaseGrid) -> float:
    if f.ndim == grid.d:
        return grid.cell_measure_v
    if f.ndim == grid.d + 1:
        return grid.dx * grid.cell_measure_v
    raise ValueError(f"array with {f.ndim} axes does not match a d={grid.d} grid")


def relative_entropy(f: np.ndarray, g: np.ndarray, grid: PhaseGrid) -> float:
    """Discrete ``sum f ln(f/g)`` times the cell measure, with 0 ln 0 = 0."""
    f = np.asarray(f, dtype=float)
    g = np.broadcast_to(np.asarray(g, dtype=float), f.shape)
    pos = f > 0
    if np.any(g[pos] <= 0):
        raise ValueError("relative entropy undefined: f > 0 where g <= 0")
    val = np.zeros_like(f)
    val[pos] = f[pos] * np.log(f[pos] / g[pos])
    return float(val.sum() * _measure(f, grid))


def l1_distance_to_equilibrium(f: np.ndarray, M: np.ndarray, grid: PhaseGrid) -> float:
    """``sum |f - M|`` times the cell measure."""
    f = np.asarray(f, dtype=float)
    M = np.broadcast_to(np.asarray(M, dtype=float), f.shape)
    return float(np.abs(f - M).sum() * _measure(f, grid))


def restrict_velocity(f: np.ndarray, grid_fine: PhaseGrid) -> np.ndarray:
    """Average velocity cell pairs: fine cells tile the coarse cells exactly."""
    out = np.asarray(f, dtype=float)
    start = out.ndim - grid_fine.d
    for ax in range(start, out.ndim):
        shape = out.shape[:ax] + (out.shape[ax] // 2, 2) + out.shape[ax + 1 :]
        out = out.reshape(shape).mean(axis=ax + 1)
    return out


def restrict_space(f: np.ndarray) -> np.ndarray:
    """Conservative (1/4, 1/2, 1/4) restriction onto every second x node.

    The x nodes are not staggered across refinements, so plain pair
    averaging would shift values by dx/4 and degrade observed orders; full
    weighting is the cell average centered on the shared coarse nodes.
    """
    f = np.asarray(f, dtype=float)
    shared = f[1::2]  # fine nodes coincident with the coarse nodes
    return 0.5 * shared + 0.25 * (f[0::2] + np.roll(f, -1, axis=0)[1::2])


def _loglog_slope(params: np.ndarray, errors: np.ndarray) -> float:
    return float(np.polyfit(np.log(params), np.log(errors), 1)[0])


def richardson_errors(
    kind: str, runs: Sequence[tuple[float, PhaseGrid, np.ndarray]]
) -> tuple[np.ndarray, float]:
    """Successive-refinement L1 differences and their log-log slope.

    ``runs`` is ordered coarse to fine as ``(parameter, grid, f_final)``
    with parameters halving; the finer solution is restricted to the
    coarser grid (velocity: exact cell averaging; space: full weighting)
    before taking the L1 difference on the coarse grid.
    """
    if kind not in ("dv", "tau", "dx"):
        raise ValueError(f"unknown refinement kind {kind!r}")
    if len(runs) < 2:
        raise ValueError("need at least two refinement levels")
    params = np.array([p for p, _, _ in runs], dtype=float)
    if not np.allclose(params[1:] * 2.0, params[:-1], rtol=1e-12):
        raise ValueError(f"{kind} parameters must halve between runs: {params}")

    errors = []
    for (p_c, g_c, f_c), (p_f, g_f, f_f) in zip(runs[:-1], runs[1:]):
        if kind == "tau":
            if f_c.shape != f_f.shape:
                raise ValueError("tau refinement requires a common grid")
            fine_on_coarse = f_f
        elif kind == "dv":
            if g_f.n_v != 2 * g_c.n_v or g_f.l_v != g_c.l_v:
                raise ValueError("dv refinement grids do not nest")
            fine_on_coarse = restrict_velocity(f_f, g_f)
        else:
            if g_f.n_x != 2 * g_c.n_x or g_f.n_v != g_c.n_v:
                raise ValueError("dx refinement grids do not nest")
            fine_on_coarse = restrict_space(f_f)
        errors.append(l1_distance_to_equilibrium(f_c, fine_on_coarse, g_c))
    errors = np.asarray(errors)
    return errors, _loglog_slope(params[:-1], errors)


def optimizer_error_trace(iterates: np.ndarray, u_star: np.ndarray) -> np.ndarray:
    """Relative L1 errors ``|u_k - u*|_1 / |u*|_1`` per optimizer iterate."""
    u_star = np.asarray(u_star, dtype=float)
    denom = np.abs(u_star).sum()
    if denom == 0:
        raise ValueError("reference iterate has zero L1 norm")
    return np.abs(np.asarray(iterates, dtype=float) - u_star).sum(axis=1) / denom


def vfp_global_equilibrium(
    phi0: Callable[[np.ndarray], np.ndarray],
    grid: PhaseGrid,
    mass: float,
    quad_points: int = 1_000_000,
) -> np.ndarray:
    """Tabulated ``f_inf = C exp(-|v|^2/2 - phi0(x))`` with quadrature normalization.

    ``C`` is fixed so the continuum mass equals ``mass`` (the velocity
    integral over R^d is exact, the x integral uses composite midpoint with
    ``quad_points`` nodes).
    """
    xs = grid.x_min + (np.arange(quad_points) + 0.5) * (grid.x_max - grid.x_min) / quad_points
    z_x = np.exp(-phi0(xs)).mean() * (grid.x_max - grid.x_min)
    c = mass / (z_x * (2.0 * np.pi) ** (grid.d / 2.0))

    v2 = sum(c_ax**2 for c_ax in grid.v_mesh())
    vel = np.exp(-0.5 * v2)
    xpart = np.exp(-phi0(grid.x)).reshape((grid.n_x,) + (1,) * grid.d)
    return c * xpart * vel[None]
