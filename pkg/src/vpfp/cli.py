"""Command-line experiment runner.

Every benchmark study is a subcommand writing CSV files (schema-versioned
header comment, '.' decimals) into ``--out``. Parameters come from a flat
``key = value`` config file with an ``[experiment]`` section; every key is
validated against the subcommand's schema and unknown keys abort with a
usage message. Outputs are byte-reproducible for identical configs (the
``timing`` subcommand's seconds column is the one documented exception).
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .driver import four_bump_2d, semi_torus_2d

_LIST_F = "list[float]"
_LIST_I = "list[int]"

SCHEMAS: dict[str, dict[str, tuple[str, object]]] = {
    "homog-convergence": {
        "eps_list": (_LIST_F, list(experiments.EPS_SWEEP)),
        "n_v_list": (_LIST_I, [64, 128, 256, 512]),
        "tau_list": (_LIST_F, [0.1, 0.05, 0.025, 0.0125]),
        "tau": ("float", 0.05),
        "delta": ("float", 1e-7),
        "n_steps": ("int", 40),
    },
    "timing": {
        "eps_list": (_LIST_F, list(experiments.EPS_SWEEP)),
        "tau": ("float", 0.05),
        "repeats": ("int", 5),
    },
    "accuracy-v": {
        "eps_list": (_LIST_F, list(experiments.EPS_SWEEP)),
        "n_v_list": (_LIST_I, [64, 128, 256, 512, 1024]),
        "tau": ("float", 0.0063),
        "t_final": ("float", 0.1),
    },
    "accuracy-xt": {
        "eps_list": (_LIST_F, list(experiments.EPS_SWEEP)),
        "t_final": ("float", 0.1),
        "n_x_tau": ("int", 16),
        "tau_halvings": ("int", 5),
        "n_x_list": (_LIST_I, [16, 32, 64, 128, 256]),
    },
    "ap-distance": {
        "eps_list": (_LIST_F, [1e-1, 1e-2, 1e-3]),
        "t_final": ("float", 0.1),
        "d": ("int", 1),
    },
    "entropy-vfp": {
        "n_x_list": (_LIST_I, [32, 64]),
        "t_final": ("float", 4.0),
    },
    "entropy-vpfp": {
        "t_final": ("float", 5.0),
        "n_x": ("int", 32),
    },
    "mixing": {
        "times": (_LIST_F, [0.2, 0.3]),
        "n_x_ap": ("int", 100),
        "n_x_ref": ("int", 2000),
        "tau_ref": ("float", 7.0313e-6),
    },
    "evolve-2d": {
        "ic": ("str", "semi-torus"),
        "eps": ("float", 0.2),
        "tau": ("float", 0.05),
        "t_final": ("float", 2.0),
        "n_v": ("int", 40),
        "snapshot_times": (_LIST_F, [0.05, 0.15, 0.5]),
    },
    "evolve-3d": {
        "eps": ("float", 0.2),
        "tau": ("float", 0.05),
        "t_final": ("float", 2.1),
        "n_v": ("int", 16),
        "snapshot_times": (_LIST_F, [0.05, 0.15]),
    },
    "selftest": {},
}


class ConfigError(Exception):
    pass


def _parse_value(raw: str, kind: str):
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "str":
            return raw
        if kind == _LIST_F:
            return [float(tok) for tok in raw.split(",") if tok.strip()]
        if kind == _LIST_I:
            return [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"invalid value {raw!r}: {exc}") from exc
    raise ConfigError(f"unknown type {kind}")


def load_params(subcommand: str, config_path: str | None) -> dict:
    schema = SCHEMAS[subcommand]
    params = {key: default for key, (_, default) in schema.items()}
    if config_path is None:
        return params
    path = Path(config_path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read(path)
    for section in parser.sections():
        if section != "experiment":
            raise ConfigError(f"unknown section [{section}] (only [experiment] is recognized)")
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in section [experiment] for {subcommand}")
            try:
                params[key] = _parse_value(raw, schema[key][0])
            except ConfigError as exc:
                raise ConfigError(f"key {key!r}: {exc}") from exc
    return params


def _dispatch(subcommand: str, params: dict, workers: int) -> dict[str, str]:
    if subcommand == "homog-convergence":
        return experiments.homog_convergence(
            eps_list=params["eps_list"], n_v_list=params["n_v_list"],
            tau_list=params["tau_list"], tau=params["tau"],
            delta=params["delta"], n_steps=params["n_steps"],
        )
    if subcommand == "timing":
        return experiments.timing(eps_list=params["eps_list"], tau=params["tau"],
                                  repeats=params["repeats"])
    if subcommand == "accuracy-v":
        return experiments.accuracy_v(eps_list=params["eps_list"],
                                      n_v_list=params["n_v_list"],
                                      tau=params["tau"], T=params["t_final"])
    if subcommand == "accuracy-xt":
        return experiments.accuracy_xt(eps_list=params["eps_list"], T=params["t_final"],
                                       n_x_tau=params["n_x_tau"],
                                       tau_halvings=params["tau_halvings"],
                                       n_x_list=params["n_x_list"], workers=workers)
    if subcommand == "ap-distance":
        return experiments.ap_distance(eps_list=params["eps_list"], T=params["t_final"],
                                       d=params["d"], workers=workers)
    if subcommand == "entropy-vfp":
        return experiments.entropy_vfp(n_x_list=params["n_x_list"], T=params["t_final"],
                                       workers=workers)
    if subcommand == "entropy-vpfp":
        return experiments.entropy_vpfp(T=params["t_final"], n_x=params["n_x"],
                                        workers=workers)
    if subcommand == "mixing":
        return experiments.mixing(T_values=tuple(params["times"]), n_x_ap=params["n_x_ap"],
                                  n_x_ref=params["n_x_ref"], tau_ref=params["tau_ref"],
                                  workers=workers)
    if subcommand == "evolve-2d":
        ic = {"semi-torus": semi_torus_2d, "four-bump": four_bump_2d}.get(params["ic"])
        if ic is None:
            raise ConfigError(f"unknown 2d initial condition {params['ic']!r}")
        return experiments.evolve_homogeneous(
            2, ic, l_v=5.0, n_v=params["n_v"], eps=params["eps"], tau=params["tau"],
            T=params["t_final"], snapshot_times=tuple(params["snapshot_times"]),
            workers=workers)
    if subcommand == "evolve-3d":
        from .driver import double_gauss_3d

        return experiments.evolve_homogeneous(
            3, double_gauss_3d, l_v=4.0, n_v=params["n_v"], eps=params["eps"],
            tau=params["tau"], T=params["t_final"],
            snapshot_times=tuple(params["snapshot_times"]), workers=workers)
    raise ConfigError(f"unknown subcommand {subcommand}")


def selftest() -> int:
    """Fast property checks over the optimization core; returns failure count."""
    from .collision import (
        CollisionState,
        build_divergence_operator,
        diag_hessian,
        gradient,
        hessian_eigenvalues,
        jko_step_linesearch,
        local_maxwellian,
        objective,
        prox,
    )
    from .core import PhaseGrid

    rng = np.random.default_rng(7)
    failures = 0

    def check(name: str, ok: bool, detail: str = ""):
        nonlocal failures
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))
        failures += 0 if ok else 1

    grid = PhaseGrid(n_x=1, l_v=2.0, n_v=4, d=1)
    A = build_divergence_operator(1, 4, grid.dv)
    f = rng.uniform(0.5, 2.0, 4)
    m = rng.normal(size=(1, 4))
    u = CollisionState(f, m)
    H = diag_hessian(u, 0.3, 0.05, grid)
    b = rng.uniform(0.5, 2.0, 4)
    z = prox(u.packed, H, A, b)
    feas = np.abs(A.apply(z) - b).max()
    check("prox feasibility |Az-b| <= 1e-10", feas <= 1e-10, f"{feas:.2e}")

    hfull = np.concatenate([H.h1, H.h2])
    kkt = np.block([[np.diag(hfull), A.full.toarray().T],
                    [A.full.toarray(), np.zeros((4, 4))]])
    rhs = np.concatenate([hfull * u.packed, b])
    z_kkt = np.linalg.solve(kkt, rhs)[:8]
    check("prox matches dense KKT oracle <= 1e-10", np.abs(z - z_kkt).max() <= 1e-10)

    fj, mj = 0.7, np.array([0.3, -0.2, 0.5])
    eps, tau, dv = 0.2, 0.05, 0.25
    z1, z2, z3 = hessian_eigenvalues(fj, mj, eps, tau, dv, 3)
    w = dv**3
    blk = np.zeros((4, 4))
    blk[0, 0] = (2 * eps * (mj**2).sum() / fj**3 + 2 * tau / fj) * w
    for l in range(3):
        blk[0, l + 1] = blk[l + 1, 0] = -2 * eps * mj[l] / fj**2 * w
        blk[l + 1, l + 1] = 2 * eps / fj * w
    dense = np.sort(np.linalg.eigvalsh(blk))
    closed = np.sort([z1, z1, z3, z2])
    check("hessian eigenvalue formulas <= 1e-10", np.abs(dense - closed).max() <= 1e-10)

    M = local_maxwellian(float(f.sum() * grid.dv), 0.0, grid)
    g = gradient(u, M, 0.3, 0.05, grid)
    direction = rng.normal(size=8)
    h_fd = 1e-6
    up = CollisionState.from_packed(u.packed + h_fd * direction, 1)
    dn = CollisionState.from_packed(u.packed - h_fd * direction, 1)
    fd = (objective(up, M, 0.3, 0.05, grid) - objective(dn, M, 0.3, 0.05, grid)) / (2 * h_fd)
    rel = abs(fd - g @ direction) / max(abs(fd), 1e-30)
    check("gradient vs central differences <= 1e-6", rel <= 1e-6, f"{rel:.2e}")

    grid64 = PhaseGrid(n_x=1, l_v=5.0, n_v=64, d=1)
    v = grid64.v_axis
    f0 = 2 * np.exp(-((v - 1.5) ** 2) / 1.2) + 0.5 * np.exp(-((v + 1.5) ** 2) / 1.5)
    M64 = local_maxwellian(float(f0.sum() * grid64.dv), 0.0, grid64)
    res = jko_step_linesearch(f0, M64, 1e-2, 0.05, 0.01, 1e-7, 400, grid64)
    mass_err = abs(res.f.sum() - f0.sum()) / f0.sum()
    check("collision mass conservation <= 1e-10", mass_err <= 1e-10, f"{mass_err:.2e}")
    check("positivity of all iterates", bool(res.trace.min_f.min() > 0))
    e_new = float(np.sum(res.f * np.log(res.f / M64)) * grid64.dv)
    e_old = float(np.sum(f0 * np.log(f0 / M64)) * grid64.dv)
    check("entropy decrease per collision step", e_new <= e_old + 1e-10)
    return failures


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vpfp", description="Kinetic high-field benchmark experiments (CSV output)."
    )
    parser.add_argument("subcommand", choices=sorted(SCHEMAS))
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--out", default="out", help="output directory (default: ./out)")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--algorithm", choices=("fixed", "linesearch"), default=None,
                        help="reserved for run-style studies; sweeps always cover both")
    args = parser.parse_args(argv)

    try:
        params = load_params(args.subcommand, args.config)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"vpfp: error: {exc}", file=sys.stderr)
        return 2

    if args.subcommand == "selftest":
        return 1 if selftest() else 0

    try:
        outputs = _dispatch(args.subcommand, params, args.workers)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"vpfp: error: {exc}", file=sys.stderr)
        return 2

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, text in outputs.items():
        (outdir / name).write_text(text)
        print(f"wrote {outdir / name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
