"""Named desk-scale studies behind the CLI subcommands.

Every function returns ``{filename: csv text}``; defaults reproduce the
benchmark settings and can be overridden through the parsed config the CLI
passes in. All outputs are deterministic except the wall-clock column of
the timing study.
"""

from __future__ import annotations

import time

import numpy as np

from .collision import jko_step_fixed, jko_step_linesearch, local_maxwellian
from .core import PhaseGrid, SolverConfig, density
from .diagnostics import (
    optimizer_error_trace,
    relative_entropy,
    restrict_space,
    richardson_errors,
    vfp_global_equilibrium,
)
from .driver import (
    SQRT_2PI,
    double_bump_1d,
    format_csv,
    four_bump_x_2d,
    four_bump_rho0,
    mixing_1d,
    mixing_background,
    mixing_epsilon,
    run,
    semi_torus_2d,
    snapshot_csv,
    two_stream_1d,
    two_stream_background,
    vfp_potential,
    vfp_potential_grad,
)
from .reference import explicit_vpfp_step

EPS_SWEEP = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


def gamma_for(eps: float) -> float:
    """Fixed prox step used in the fixed-step benchmark runs."""
    return 0.5 if eps >= 1e-2 else 0.4


def _homog_setup(n_v: int = 64, l_v: float = 5.0):
    grid = PhaseGrid(n_x=1, l_v=l_v, n_v=n_v, d=1)
    f0 = double_bump_1d(grid)[0]
    rho = float(f0.sum() * grid.dv)
    M = local_maxwellian(rho, 0.0, grid)
    return grid, f0, M


def _reference_solution(f0, M, eps, tau, grid, iters: int = 160):
    """Long fixed-step run used as the optimizer ground truth."""
    res = jko_step_fixed(f0, M, eps, tau, gamma_for(eps), 0.0, iters, grid)
    return np.concatenate([res.f, res.m.ravel()])


def homog_convergence(
    eps_list=EPS_SWEEP,
    dv_sweep_eps=(1.0, 1e-5),
    n_v_list=(64, 128, 256, 512),
    tau_list=(0.1, 0.05, 0.025, 0.0125),
    tau: float = 0.05,
    delta: float = 1e-7,
    n_steps: int = 40,
) -> dict[str, str]:
    """Optimizer error traces for eps / dv / tau sweeps plus per-step counts."""
    out = {}

    rows_eps, rows_it = {"epsilon": [], "algorithm": [], "k": [], "error": []}, None
    for eps in eps_list:
        grid, f0, M = _homog_setup()
        u_star = _reference_solution(f0, M, eps, tau, grid)
        for name, res in (
            ("fixed", jko_step_fixed(f0, M, eps, tau, gamma_for(eps), delta, 160, grid,
                                     record_iterates=True)),
            ("linesearch", jko_step_linesearch(f0, M, eps, tau, 0.01, delta, 160, grid,
                                               record_iterates=True)),
        ):
            err = optimizer_error_trace(res.iterates, u_star)
            for k, e in enumerate(err):
                rows_eps["epsilon"].append(eps)
                rows_eps["algorithm"].append(name)
                rows_eps["k"].append(k)
                rows_eps["error"].append(e)
    out["convergence_eps.csv"] = format_csv({"kind": "error_k-vs-eps", "tau": tau}, rows_eps)

    rows = {"epsilon": [], "n_v": [], "k": [], "error": []}
    for eps in dv_sweep_eps:
        for n_v in n_v_list:
            grid, f0, M = _homog_setup(n_v=n_v)
            u_star = _reference_solution(f0, M, eps, tau, grid)
            res = jko_step_fixed(f0, M, eps, tau, gamma_for(eps), delta, 160, grid,
                                 record_iterates=True)
            for k, e in enumerate(optimizer_error_trace(res.iterates, u_star)):
                rows["epsilon"].append(eps)
                rows["n_v"].append(n_v)
                rows["k"].append(k)
                rows["error"].append(e)
    out["convergence_dv.csv"] = format_csv({"kind": "error_k-vs-dv", "tau": tau}, rows)

    rows = {"epsilon": [], "tau": [], "k": [], "error": []}
    for eps in dv_sweep_eps:
        for tau_k in tau_list:
            grid, f0, M = _homog_setup()
            u_star = _reference_solution(f0, M, eps, tau_k, grid)
            res = jko_step_fixed(f0, M, eps, tau_k, gamma_for(eps), delta, 160, grid,
                                 record_iterates=True)
            for k, e in enumerate(optimizer_error_trace(res.iterates, u_star)):
                rows["epsilon"].append(eps)
                rows["tau"].append(tau_k)
                rows["k"].append(k)
                rows["error"].append(e)
    out["convergence_tau.csv"] = format_csv({"kind": "error_k-vs-tau"}, rows)

    rows_it = {"epsilon": [], "algorithm": [], "step": [], "iterations": []}
    for eps in eps_list:
        grid, f0, M0 = _homog_setup()
        for name in ("fixed", "linesearch"):
            f = f0.copy()
            for step in range(1, n_steps + 1):
                rho = float(f.sum() * grid.dv)
                M = local_maxwellian(rho, 0.0, grid)
                if name == "fixed":
                    res = jko_step_fixed(f, M, eps, tau, gamma_for(eps), delta, 1000, grid)
                else:
                    res = jko_step_linesearch(f, M, eps, tau, 0.01, delta, 1000, grid)
                f = res.f
                rows_it["epsilon"].append(eps)
                rows_it["algorithm"].append(name)
                rows_it["step"].append(step)
                rows_it["iterations"].append(res.iterations)
    out["iterations_per_step.csv"] = format_csv({"kind": "per-step-iterations", "tau": tau}, rows_it)
    return out


def timing(eps_list=EPS_SWEEP, tau: float = 0.05, delta: float = 1e-7, repeats: int = 5):
    """Wall-clock of one collision solve per eps (seconds column is not reproducible)."""
    rows = {"epsilon": [], "algorithm": [], "iterations": [], "seconds": []}
    for eps in eps_list:
        grid, f0, M = _homog_setup()
        for name, solver in (
            ("fixed", lambda: jko_step_fixed(f0, M, eps, tau, gamma_for(eps), delta, 1000, grid)),
            ("linesearch", lambda: jko_step_linesearch(f0, M, eps, tau, 0.01, delta, 1000, grid)),
        ):
            res = solver()
            samples = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                solver()
                samples.append(time.perf_counter() - t0)
            rows["epsilon"].append(eps)
            rows["algorithm"].append(name)
            rows["iterations"].append(res.iterations)
            rows["seconds"].append(float(np.median(samples)))
    return {"timing.csv": format_csv({"kind": "one-step-timing", "tau": tau}, rows)}


def _homog_run(eps, tau, n_v, T, delta=1e-7):
    grid = PhaseGrid(n_x=1, l_v=5.0, n_v=n_v, d=1)
    cfg = SolverConfig(eps=eps, tau=tau, T=T, mode="homogeneous", delta=delta, n_max=1000)
    res = run(cfg, grid, double_bump_1d(grid))
    return grid, res.f_final[0]


def accuracy_v(eps_list=EPS_SWEEP, n_v_list=(64, 128, 256, 512, 1024),
               tau: float = 0.0063, T: float = 0.1) -> dict[str, str]:
    """Velocity refinement errors for the homogeneous relaxation problem."""
    if len(n_v_list) < 2:
        raise ValueError("accuracy-v needs at least two velocity resolutions")
    rows = {"epsilon": [], "dv": [], "error": []}
    slopes = {"epsilon": [], "slope": []}
    for eps in eps_list:
        runs = []
        for n_v in n_v_list:
            grid, f_T = _homog_run(eps, tau, n_v, T)
            runs.append((grid.dv, grid, f_T))
        errors, slope = richardson_errors("dv", runs)
        for (dv, _, _), e in zip(runs[:-1], errors):
            rows["epsilon"].append(eps)
            rows["dv"].append(dv)
            rows["error"].append(e)
        slopes["epsilon"].append(eps)
        slopes["slope"].append(slope)
    return {
        "accuracy_v.csv": format_csv({"kind": "e_dv", "tau": tau, "T": T}, rows),
        "accuracy_v_slopes.csv": format_csv({"kind": "e_dv-slopes"}, slopes),
    }


def _two_stream_run(eps, n_x, n_v, l_v, tau, T, workers=1):
    grid = PhaseGrid(n_x=n_x, l_v=l_v, n_v=n_v, d=1, x_min=0.0, x_max=1.0)
    cfg = SolverConfig(eps=eps, tau=tau, T=T, mode="vpfp",
                       background=two_stream_background, workers=workers)
    res = run(cfg, grid, two_stream_1d(grid))
    return grid, res


def accuracy_xt(eps_list=EPS_SWEEP, T: float = 0.1, n_x_tau: int = 16,
                tau_halvings: int = 5, n_x_list=(16, 32, 64, 128, 256),
                workers: int = 1) -> dict[str, str]:
    """Time-step and space refinement errors for the two-stream problem."""
    rows_t = {"epsilon": [], "tau": [], "error": []}
    slopes_t = {"epsilon": [], "slope": []}
    dx = 1.0 / n_x_tau
    for eps in eps_list:
        runs = []
        for k in range(tau_halvings):
            tau = dx / 8.0 / 2**k
            grid, res = _two_stream_run(eps, n_x_tau, 64, 6.0, tau, T, workers)
            runs.append((tau, grid, res.f_final))
        errors, slope = richardson_errors("tau", runs)
        for (tau, _, _), e in zip(runs[:-1], errors):
            rows_t["epsilon"].append(eps)
            rows_t["tau"].append(tau)
            rows_t["error"].append(e)
        slopes_t["epsilon"].append(eps)
        slopes_t["slope"].append(slope)

    rows_x = {"epsilon": [], "dx": [], "error": []}
    slopes_x = {"epsilon": [], "slope": []}
    for eps in eps_list:
        runs = []
        for n_x in n_x_list:
            dx_k = 1.0 / n_x
            grid, res = _two_stream_run(eps, n_x, 64, 5.0, dx_k / 8.0, T, workers)
            runs.append((dx_k, grid, res.f_final))
        errors, slope = richardson_errors("dx", runs)
        for (dx_k, _, _), e in zip(runs[:-1], errors):
            rows_x["epsilon"].append(eps)
            rows_x["dx"].append(dx_k)
            rows_x["error"].append(e)
        slopes_x["epsilon"].append(eps)
        slopes_x["slope"].append(slope)

    return {
        "accuracy_tau.csv": format_csv({"kind": "e_tau", "T": T}, rows_t),
        "accuracy_tau_slopes.csv": format_csv({"kind": "e_tau-slopes"}, slopes_t),
        "accuracy_dx.csv": format_csv({"kind": "e_dx", "T": T}, rows_x),
        "accuracy_dx_slopes.csv": format_csv({"kind": "e_dx-slopes"}, slopes_x),
    }


def ap_distance(eps_list=(1e-1, 1e-2, 1e-3), T: float = 0.1, d: int = 1,
                workers: int = 1) -> dict[str, str]:
    """Distance to the local equilibrium over time for decreasing eps."""
    rows = {"epsilon": [], "t": [], "distance": []}
    for eps in eps_list:
        if d == 1:
            grid, res = _two_stream_run(eps, 64, 64, 6.0, (1.0 / 64) / 16.0, T, workers)
        elif d == 2:
            grid = PhaseGrid(n_x=16, l_v=5.0, n_v=40, d=2, x_min=0.0, x_max=1.0)
            cfg = SolverConfig(eps=eps, tau=0.0078, T=T, mode="vpfp",
                               background=two_stream_background, workers=workers)
            res = run(cfg, grid, four_bump_x_2d(grid))
        else:
            raise ValueError("ap-distance supports d = 1 or 2")
        for t, dist in zip(res.times, res.dist_to_equilibrium):
            rows["epsilon"].append(eps)
            rows["t"].append(t)
            rows["distance"].append(dist)
    return {"ap_distance.csv": format_csv({"kind": "l1-distance-to-M", "d": d, "T": T}, rows)}


def entropy_vfp(n_x_list=(32, 64), T: float = 4.0, workers: int = 1) -> dict[str, str]:
    """Relative entropy to the fixed-potential global equilibrium over time."""
    rows = {"n_x": [], "t": [], "entropy": []}
    for n_x in n_x_list:
        grid = PhaseGrid(n_x=n_x, l_v=6.0, n_v=64, d=1, x_min=0.0, x_max=1.0)
        f_inf = vfp_global_equilibrium(vfp_potential, grid, mass=2.0 * SQRT_2PI)
        cfg = SolverConfig(eps=1.0, tau=grid.dx / 15.0, T=T, mode="vfp",
                           external_potential_grad=vfp_potential_grad, workers=workers)
        res = run(cfg, grid, two_stream_1d(grid),
                  per_step=lambda t, f, _s: {"entropy": relative_entropy(f, f_inf, grid)})
        for t, e in zip(res.times, res.extras["entropy"]):
            rows["n_x"].append(n_x)
            rows["t"].append(t)
            rows["entropy"].append(e)
    return {"entropy_vfp.csv": format_csv({"kind": "E(f|f_inf)-vfp", "T": T}, rows)}


def entropy_vpfp(T: float = 5.0, n_x: int = 32, workers: int = 1) -> dict[str, str]:
    """Self-consistent entropy decay; f_inf is the long-run final state."""
    grid = PhaseGrid(n_x=n_x, l_v=6.0, n_v=64, d=1, x_min=0.0, x_max=1.0)
    tau = grid.dx / 16.0
    cfg = SolverConfig(eps=1.0, tau=tau, T=T, mode="vpfp",
                       background=two_stream_background, workers=workers,
                       snapshot_every=max(1, int(round(T / tau)) // 200))
    res = run(cfg, grid, two_stream_1d(grid))
    f_inf = res.f_final
    rows = {"t": [], "entropy": []}
    for t, f in res.snapshots[:-1]:
        rows["t"].append(t)
        rows["entropy"].append(relative_entropy(f, f_inf, grid))
    return {"entropy_vpfp.csv": format_csv({"kind": "E(f|f_inf)-vpfp", "T": T}, rows)}


def mixing(T_values=(0.2, 0.3), n_x_ap: int = 100, n_x_ref: int = 2000,
           tau_ref: float = 7.0313e-6, workers: int = 1) -> dict[str, str]:
    """AP scheme vs resolved explicit solver in the mixing regime."""
    t_final = max(T_values)

    grid_ap = PhaseGrid(n_x=n_x_ap, l_v=6.0, n_v=64, d=1, x_min=-1.0, x_max=1.0)
    cfg = SolverConfig(eps=mixing_epsilon(grid_ap.x), tau=grid_ap.dx / 15.0, T=t_final,
                       mode="vpfp", background=mixing_background, workers=workers)
    rho_ap = _density_snapshots(grid_ap, cfg, mixing_1d(grid_ap), T_values)

    grid_ref = PhaseGrid(n_x=n_x_ref, l_v=6.0, n_v=64, d=1, x_min=-1.0, x_max=1.0)
    cfg_ref = SolverConfig(eps=mixing_epsilon(grid_ref.x), tau=tau_ref, T=t_final,
                           mode="vpfp", background=mixing_background)
    rho_ref = _explicit_density_snapshots(grid_ref, cfg_ref, mixing_1d(grid_ref), T_values)

    ratio = n_x_ref // n_x_ap
    out_rows = {"t": [], "x": [], "rho_ap": [], "rho_ref": []}
    for t in T_values:
        coarse_ref = rho_ref[t].reshape(n_x_ap, ratio).mean(axis=1)
        for x, ra, rr in zip(grid_ap.x, rho_ap[t], coarse_ref):
            out_rows["t"].append(t)
            out_rows["x"].append(x)
            out_rows["rho_ap"].append(ra)
            out_rows["rho_ref"].append(rr)
    return {"mixing.csv": format_csv({"kind": "mixing-density-comparison"}, out_rows)}


def _density_snapshots(grid, cfg, f0, T_values):
    wanted = sorted(T_values)
    saved: dict[float, np.ndarray] = {}

    def hook(t, f, _s):
        for tw in wanted:
            if tw not in saved and t >= tw - 1e-12:
                saved[tw] = density(f, grid)
        return {}

    res = run(cfg, grid, f0, per_step=hook)
    saved.setdefault(wanted[-1], density(res.f_final, grid))
    return saved


def _explicit_density_snapshots(grid, cfg, f0, T_values):
    wanted = sorted(T_values)
    saved: dict[float, np.ndarray] = {}
    f = f0.copy()
    t = 0.0
    n_steps = int(np.ceil(max(wanted) / cfg.tau - 1e-12))
    for _ in range(n_steps):
        tau_k = min(cfg.tau, max(wanted) - t)
        f = explicit_vpfp_step(f, cfg, grid, tau=tau_k)
        t += tau_k
        for tw in wanted:
            if tw not in saved and t >= tw - 1e-12:
                saved[tw] = density(f, grid)
    saved.setdefault(wanted[-1], density(f, grid))
    return saved


def evolve_homogeneous(d: int, ic, l_v: float, n_v: int, eps: float = 0.2,
                       tau: float = 0.05, T: float = 2.0, snapshot_times=(0.05, 0.15),
                       workers: int = 1) -> dict[str, str]:
    """Homogeneous 2D/3D relaxation: snapshots plus invariant diagnostics."""
    grid = PhaseGrid(n_x=1, l_v=l_v, n_v=n_v, d=d)
    cfg = SolverConfig(eps=eps, tau=tau, T=T, mode="homogeneous", workers=workers)
    f0 = ic(grid)
    wanted = sorted(set(snapshot_times) | {T})
    snaps: dict[float, np.ndarray] = {0.0: f0.copy()}

    def hook(t, f, _s):
        for tw in wanted:
            if tw not in snaps and t >= tw - 1e-12:
                snaps[tw] = f.copy()
        return {}

    res = run(cfg, grid, f0, per_step=hook)
    out = {}
    for t, f in sorted(snaps.items()):
        out[f"snapshot_t{t:g}.csv"] = snapshot_csv(f, grid, t)
    diag = {
        "t": res.times,
        "mass": res.mass,
        "min_f": res.min_f,
        "entropy_to_M": res.entropy_to_equilibrium,
        "iterations": res.iterations_max,
    }
    out["invariants.csv"] = format_csv({"kind": f"evolve-{d}d", "epsilon": eps}, diag)
    return out
