"""IMEX orchestration: transport -> Poisson -> implicit collision.

Modes:

* ``vpfp``   — full loop with the self-consistent spectral field;
* ``vfp``    — fixed external potential instead of the Poisson solve;
* ``homogeneous`` — velocity-only relaxation (transport and field skipped).

Also hosts the named initial-condition builders for the benchmark problems
(1D double bump, 1D two-stream with cosine background, fixed-potential VFP,
mixing regime with tanh-profiled eps(x), 2D four-bump / semi-torus pair,
3D double Gaussian) and snapshot / diagnostic CSV emission.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .collision import CollisionInfo, collision_step, local_maxwellian
from .core import PhaseGrid, SolverConfig, density
from .diagnostics import l1_distance_to_equilibrium, relative_entropy
from .poisson import solve_poisson
from .transport import transport_step

SQRT_2PI = np.sqrt(2.0 * np.pi)


# ----------------------------------------------------------------------
# initial conditions
# ----------------------------------------------------------------------

def double_bump_1d(grid: PhaseGrid) -> np.ndarray:
    """Spatially homogeneous two-bump profile on v in [-5, 5]."""
    v = grid.v_axis
    f_v = 2.0 * np.exp(-((v - 1.5) ** 2) / 1.2) + 0.5 * np.exp(-((v + 1.5) ** 2) / 1.5)
    return np.tile(f_v, (grid.n_x, 1))


def two_stream_rho0(x: np.ndarray) -> np.ndarray:
    return SQRT_2PI * (2.0 + np.cos(2.0 * np.pi * x))


def two_stream_background(x: np.ndarray) -> np.ndarray:
    return 5.0132 / 1.2661 * np.exp(np.cos(2.0 * np.pi * x))


def two_stream_1d(grid: PhaseGrid) -> np.ndarray:
    """Counter-streaming Maxwellians modulated by a cosine density."""
    rho = two_stream_rho0(grid.x)[:, None]
    v = grid.v_axis[None, :]
    return rho / (2.0 * SQRT_2PI) * (
        np.exp(-((v + 1.5) ** 2) / 2.0) + np.exp(-((v - 1.5) ** 2) / 2.0)
    )


def vfp_potential(x: np.ndarray) -> np.ndarray:
    return np.sin(2.0 * np.pi * x) / 5.0


def vfp_potential_grad(x: np.ndarray) -> np.ndarray:
    return 2.0 * np.pi / 5.0 * np.cos(2.0 * np.pi * x)


def mixing_epsilon(x: np.ndarray, eps0: float = 1e-3) -> np.ndarray:
    """Kinetic on the left, high-field on the right, discontinuous at x = 0.3."""
    e = np.full_like(np.asarray(x, dtype=float), eps0)
    left = x <= 0.3
    e[left] += 0.5 * (np.tanh(5.0 - 10.0 * x[left]) + np.tanh(5.0 + 10.0 * x[left]))
    return e


def mixing_background(x: np.ndarray) -> np.ndarray:
    return 1.6711 / 2.5321 * np.exp(np.cos(np.pi * x))


def mixing_1d(grid: PhaseGrid) -> np.ndarray:
    """Drifted-Maxwellian start for the mixing regime on x in [-1, 1].

    The initial profile uses the field of its own density, so Poisson is
    solved once with rho^0 before the distribution is assembled.
    """
    rho = SQRT_2PI / 6.0 * (2.0 + np.sin(np.pi * grid.x))
    _, dphi = solve_poisson(rho, mixing_background(grid.x), grid)
    v = grid.v_axis[None, :]
    return rho[:, None] / SQRT_2PI * np.exp(-((v + dphi[:, None]) ** 2) / 2.0)


def four_bump_2d(grid: PhaseGrid) -> np.ndarray:
    """Homogeneous 2D profile with four unequal Gaussian bumps at (+-1, +-1)."""
    v1, v2 = grid.v_mesh()
    f_v = (
        np.exp(-((v2 - 1) ** 2) - (v1 - 1) ** 2)
        + 1.0 / np.pi * np.exp(-((v2 + 1) ** 2) - (v1 + 1) ** 2)
        + 2.0 / np.pi * np.exp(-((v2 - 1) ** 2) - (v1 + 1) ** 2)
        + 4.0 / np.pi * np.exp(-((v2 + 1) ** 2) - (v1 - 1) ** 2)
    )
    return np.broadcast_to(f_v, (grid.n_x,) + grid.v_shape).copy()


def semi_torus_2d(grid: PhaseGrid) -> np.ndarray:
    """Two semi-torus-like rings centered at (2, 2) and (-2, -2)."""
    v1, v2 = grid.v_mesh()
    r1 = np.sqrt((v1 - 2.0) ** 2 + (v2 - 2.0) ** 2) - 2.0
    r2 = np.sqrt((v1 + 2.0) ** 2 + (v2 + 2.0) ** 2) - 2.0
    f_v = 1.5 * (1.0 + r1**2) ** -10 + 2.0 * (1.0 + r2**2) ** -10
    return np.broadcast_to(f_v, (grid.n_x,) + grid.v_shape).copy()


def four_bump_rho0(x: np.ndarray) -> np.ndarray:
    return SQRT_2PI / 2.0 * (2.0 + np.cos(2.0 * np.pi * x))


def four_bump_x_2d(grid: PhaseGrid) -> np.ndarray:
    """1d_x x 2d_v four-bump initial data with cosine density modulation."""
    v1, v2 = grid.v_mesh()
    bumps = (
        np.exp(-((v2 - 2) ** 2) - (v1 - 2) ** 2)
        + np.exp(-((v2 + 2) ** 2) - (v1 + 2) ** 2)
        + np.exp(-((v2 - 2) ** 2) - (v1 + 2) ** 2)
        + np.exp(-((v2 + 2) ** 2) - (v1 - 2) ** 2)
    )
    rho = four_bump_rho0(grid.x).reshape(-1, 1, 1)
    return rho / (4.0 * np.pi) * bumps[None]


def double_gauss_3d(grid: PhaseGrid) -> np.ndarray:
    v1, v2, v3 = grid.v_mesh()
    f_v = (2.0 * np.pi) ** -1.5 * (
        np.exp(-((v1 - 1) ** 2) - (v2 + 1) ** 2 - v3**2 / 2.0)
        + np.exp(-((v1 + 1) ** 2) - (v2 - 1) ** 2 - v3**2 / 2.0)
    )
    return np.broadcast_to(f_v, (grid.n_x,) + grid.v_shape).copy()


INITIAL_CONDITIONS = {
    "double-bump-1d": double_bump_1d,
    "two-stream-1d": two_stream_1d,
    "mixing-1d": mixing_1d,
    "four-bump-2d": four_bump_2d,
    "semi-torus-2d": semi_torus_2d,
    "four-bump-x-2d": four_bump_x_2d,
    "double-gauss-3d": double_gauss_3d,
}


# ----------------------------------------------------------------------
# stepping
# ----------------------------------------------------------------------

@dataclass
class StepResult:
    f: np.ndarray
    rho: np.ndarray
    phi: np.ndarray | None
    grad_phi: np.ndarray
    collision: CollisionInfo


def vpfp_step(
    f: np.ndarray, config: SolverConfig, grid: PhaseGrid, *, tau: float | None = None
) -> StepResult:
    """One splitting step; ``rho^{n+1} = rho*`` since collisions conserve mass."""
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ValueError("distribution must be finite and non-negative")
    tau = config.tau if tau is None else tau

    if config.mode == "homogeneous":
        f_star = f
    else:
        f_star = transport_step(f, grid, tau, config.cfl_safety)

    rho_star = density(f_star, grid)
    phi = None
    if config.mode == "vpfp":
        phi, grad_phi = solve_poisson(rho_star, config.background_on(grid), grid)
    elif config.mode == "vfp":
        g = config.external_potential_grad
        grad_phi = np.asarray(g(grid.x) if callable(g) else g, dtype=float)
    else:
        grad_phi = np.zeros(grid.n_x)

    cfg = config if tau == config.tau else _with_tau(config, tau)
    f_new, info = collision_step(f_star, rho_star, grad_phi, cfg, grid)
    return StepResult(f_new, rho_star, phi, grad_phi, info)


def _with_tau(config: SolverConfig, tau: float) -> SolverConfig:
    from dataclasses import replace

    return replace(config, tau=tau)


def equilibrium_field(rho: np.ndarray, grad_phi: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Local Maxwellian at every spatial node, shaped like a distribution."""
    gp = np.asarray(grad_phi, dtype=float)
    if gp.ndim == 1:
        gp = np.column_stack([gp] + [np.zeros(len(rho))] * (grid.d - 1))
    rows = [local_maxwellian(rho[i], gp[i], grid) for i in range(len(rho))]
    return grid.unflatten_v(np.stack(rows))


@dataclass
class RunResult:
    grid: PhaseGrid
    times: np.ndarray
    mass: np.ndarray
    min_f: np.ndarray
    dist_to_equilibrium: np.ndarray
    entropy_to_equilibrium: np.ndarray
    iterations_max: np.ndarray
    snapshots: list[tuple[float, np.ndarray]] = field(default_factory=list)
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def f_final(self) -> np.ndarray:
        return self.snapshots[-1][1]


def run(
    config: SolverConfig,
    grid: PhaseGrid,
    f0: np.ndarray,
    *,
    per_step=None,
) -> RunResult:
    """March to ``T`` with a final partial step when ``T`` is not a multiple of tau.

    ``per_step(t, f, step_result)`` may return a dict of extra scalar
    diagnostics collected into ``extras`` (also evaluated at t = 0 with a
    ``None`` step result).
    """
    n_full = int(np.floor(config.T / config.tau + 1e-9))
    tail = config.T - n_full * config.tau
    if tail < 1e-9 * config.tau:
        tail = 0.0
    taus = [config.tau] * n_full + ([tail] if tail else [])

    f = np.asarray(f0, dtype=float).copy()
    times, mass, minf, dist, ent, iters = [], [], [], [], [], []
    snapshots = [(0.0, f.copy())]
    extras: dict[str, list] = {}

    def collect(t, fld, rho, grad_phi, n_iter):
        times.append(t)
        mass.append(float(fld.sum()) * grid.dx * grid.cell_measure_v)
        minf.append(float(fld.min()))
        m_eq = equilibrium_field(rho, grad_phi, grid)
        dist.append(l1_distance_to_equilibrium(fld, m_eq, grid))
        ent.append(relative_entropy(fld, m_eq, grid))
        iters.append(n_iter)

    rho0 = density(f, grid)
    collect(0.0, f, rho0, np.zeros(grid.n_x), 0)
    if per_step is not None:
        for key, val in (per_step(0.0, f, None) or {}).items():
            extras.setdefault(key, []).append(val)

    t = 0.0
    for k, tau_k in enumerate(taus, start=1):
        try:
            out = vpfp_step(f, config, grid, tau=tau_k)
        except Exception as exc:
            raise RuntimeError(f"step {k} (t={t:.6g}) failed: {exc}") from exc
        f = out.f
        t += tau_k
        collect(t, f, out.rho, out.grad_phi, int(out.collision.iterations.max()))
        if per_step is not None:
            for key, val in (per_step(t, f, out) or {}).items():
                extras.setdefault(key, []).append(val)
        if config.snapshot_every and k % config.snapshot_every == 0:
            snapshots.append((t, f.copy()))

    if not snapshots or snapshots[-1][0] != t:
        snapshots.append((t, f.copy()))
    return RunResult(
        grid,
        np.asarray(times),
        np.asarray(mass),
        np.asarray(minf),
        np.asarray(dist),
        np.asarray(ent),
        np.asarray(iters),
        snapshots,
        {k: np.asarray(v) for k, v in extras.items()},
    )


# ----------------------------------------------------------------------
# snapshot / CSV output
# ----------------------------------------------------------------------

CSV_SCHEMA = "vpfp-csv-1"


def format_csv(header_fields: dict, columns: dict[str, np.ndarray]) -> str:
    """Deterministic CSV with a '#'-prefixed schema/header comment line."""
    buf = io.StringIO()
    meta = " ".join(f"{k}={v}" for k, v in header_fields.items())
    buf.write(f"# schema={CSV_SCHEMA} {meta}".rstrip() + "\n")
    names = list(columns)
    buf.write(",".join(names) + "\n")
    cols = [np.asarray(columns[n]) for n in names]
    rows = len(cols[0])
    for c in cols:
        if len(c) != rows:
            raise ValueError("CSV columns must have equal length")
    for r in range(rows):
        buf.write(",".join(_fmt(c[r]) for c in cols) + "\n")
    return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, (np.integer, int)):
        return str(int(x))
    if isinstance(x, (np.floating, float)):
        return format(float(x), ".17g")
    return str(x)


def snapshot_csv(f: np.ndarray, grid: PhaseGrid, t: float) -> str:
    """Flattened snapshot with grid metadata in the header comment."""
    header = {
        "kind": "snapshot",
        "t": format(t, ".17g"),
        "d": grid.d,
        "n_x": grid.n_x,
        "n_v": grid.n_v,
        "dx": format(grid.dx, ".17g"),
        "dv": format(grid.dv, ".17g"),
        "x_min": format(grid.x_min, ".17g"),
        "l_v": format(grid.l_v, ".17g"),
    }
    flat = grid.flatten_v(np.asarray(f, dtype=float)).ravel()
    return format_csv(header, {"f": flat})
