"""Implicit collision step as one proximal quasi-Newton JKO solve per spatial node.

Per node the step minimizes

    F(u) = sum_j ( eps * |m_j|^2 / f_j + 2 tau f_j ln(f_j / M_j) ) dv^d

over ``u = [f; m_1; ...; m_d]`` subject to the affine continuity constraint
``f + sum_l A_l m_l = f*`` with zero-flux boundary folding in the discrete
divergence blocks ``A_l``. The scaled proximal operator onto the constraint
set has a closed form whose inner solve is a weighted-Laplacian system
``(H1^{-1} + sum_l A_l H2^{-1} A_l^T) lam = b - A u``; it is handled by a
sparse direct factorization (optionally preconditioned CG for d = 3).

The one dimensional solve has a dedicated banded kernel (see
:mod:`vpfp.kernels`); the generic path below works for d = 1, 2, 3 and is
the reference implementation the kernels are tested against.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .core import PhaseGrid, SolverConfig

_LOG_TINY = 1e-300
_MIN_STEP = 2.0**-60


class PositivityError(ValueError):
    """Objective/gradient evaluated at a non-positive density."""


class CollisionSolverError(RuntimeError):
    """Inner solver failed (line-search underflow or indefinite system)."""


@dataclass
class CollisionState:
    """Per-node optimization variable: density slice and momentum blocks."""

    f: np.ndarray  # (N,)
    m: np.ndarray  # (d, N)

    @property
    def packed(self) -> np.ndarray:
        return np.concatenate([self.f] + [self.m[l] for l in range(self.m.shape[0])])

    @classmethod
    def from_packed(cls, u: np.ndarray, d: int) -> "CollisionState":
        n = u.size // (1 + d)
        return cls(u[:n].copy(), u[n:].reshape(d, n).copy())


def _center_difference_matrix(n_v: int, dv: float) -> sp.csr_matrix:
    """N_v x N_v center-difference divergence with zero-flux folding.

    Boundary rows encode the ghost relations m_0 = -m_1 and
    m_{N+1} = -m_N, i.e. first row (1, 1, 0, ...), last row (..., -1, -1),
    all scaled by 1/(2 dv).
    """
    main = np.zeros(n_v)
    main[0] = 1.0
    main[-1] = -1.0
    d_v = sp.diags(
        [-np.ones(n_v - 1), main, np.ones(n_v - 1)], offsets=[-1, 0, 1], format="csr"
    )
    return (d_v * (1.0 / (2.0 * dv))).tocsr()


@dataclass(frozen=True)
class DivergenceOperator:
    """Sparse constraint operator ``A = [I | A_1 | ... | A_d]``.

    Blocks follow the Kronecker pattern matching first-axis-fastest
    linearization: ``A_1 = I_(N^(d-1)) (x) D_v``, ``A_2 = I (x) (D_v (x) I)``,
    ``A_3 = D_v (x) I_(N^2)``.
    """

    d: int
    n_v: int
    dv: float
    blocks: tuple[sp.csr_matrix, ...]
    blocks_t: tuple[sp.csr_matrix, ...]
    full: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.n_v**self.d

    def apply(self, u: np.ndarray) -> np.ndarray:
        """A @ [f; m] for a packed vector."""
        n = self.n
        out = u[:n].copy()
        for l, block in enumerate(self.blocks):
            out += block @ u[n * (l + 1) : n * (l + 2)]
        return out

    def divergence(self, m: np.ndarray) -> np.ndarray:
        """sum_l A_l m_l for momentum blocks of shape (d, N)."""
        out = np.zeros(self.n)
        for l, block in enumerate(self.blocks):
            out += block @ m[l]
        return out


_operator_cache: dict[tuple[int, int, float], DivergenceOperator] = {}


def build_divergence_operator(d: int, n_v: int, dv: float) -> DivergenceOperator:
    if n_v < 2:
        raise ValueError("need n_v >= 2")
    key = (d, n_v, dv)
    cached = _operator_cache.get(key)
    if cached is not None:
        return cached

    d_v = _center_difference_matrix(n_v, dv)
    eye = sp.identity
    if d == 1:
        blocks = [d_v]
    elif d == 2:
        blocks = [sp.kron(eye(n_v), d_v), sp.kron(d_v, eye(n_v))]
    elif d == 3:
        blocks = [
            sp.kron(eye(n_v**2), d_v),
            sp.kron(eye(n_v), sp.kron(d_v, eye(n_v))),
            sp.kron(d_v, eye(n_v**2)),
        ]
    else:
        raise ValueError(f"d must be 1, 2 or 3, got {d}")
    blocks = tuple(b.tocsr() for b in blocks)
    blocks_t = tuple(b.T.tocsr() for b in blocks)
    full = sp.hstack([sp.identity(n_v**d, format="csr"), *blocks], format="csr")
    op = DivergenceOperator(d, n_v, dv, blocks, blocks_t, full)
    _operator_cache[key] = op
    return op


def local_maxwellian(rho: float, grad_phi, grid: PhaseGrid) -> np.ndarray:
    """Flat local equilibrium ``rho/(2 pi)^(d/2) exp(-|v + grad_phi|^2 / 2)``."""
    if rho <= 0:
        raise ValueError(f"local Maxwellian needs rho > 0, got {rho}")
    g = np.atleast_1d(np.asarray(grad_phi, dtype=float))
    if g.size != grid.d:
        raise ValueError(f"grad_phi has {g.size} components, expected {grid.d}")
    v = grid.v_components_flat()
    sq = ((v + g[:, None]) ** 2).sum(axis=0)
    return rho / (2.0 * np.pi) ** (grid.d / 2.0) * np.exp(-0.5 * sq)


def _check_positive(f: np.ndarray):
    if np.any(f <= 0):
        raise PositivityError("density iterate has non-positive entries")


def objective(u: CollisionState, M: np.ndarray, eps: float, tau: float, grid: PhaseGrid) -> float:
    """F(u) under strict positivity of the density block."""
    _check_positive(u.f)
    msq = (u.m**2).sum(axis=0)
    val = eps * msq / u.f + 2.0 * tau * u.f * np.log(u.f / M)
    return float(val.sum() * grid.cell_measure_v)


def gradient(u: CollisionState, M: np.ndarray, eps: float, tau: float, grid: PhaseGrid) -> np.ndarray:
    """Packed gradient of F."""
    _check_positive(u.f)
    w = grid.cell_measure_v
    msq = (u.m**2).sum(axis=0)
    g_f = (-eps * msq / u.f**2 + 2.0 * tau * (np.log(u.f / M) + 1.0)) * w
    g_m = (2.0 * eps / u.f) * u.m * w
    return np.concatenate([g_f, g_m.ravel()])


@dataclass
class DiagonalPreconditioner:
    """Diagonal of the Hessian of F: density block ``h1``, momentum blocks ``h2``."""

    h1: np.ndarray
    h2: np.ndarray
    d: int = 1

    @property
    def packed_inverse(self) -> np.ndarray:
        return np.concatenate([1.0 / self.h1] + [1.0 / self.h2] * self.d)


def diag_hessian(u: CollisionState, eps: float, tau: float, grid: PhaseGrid) -> DiagonalPreconditioner:
    _check_positive(u.f)
    w = grid.cell_measure_v
    msq = (u.m**2).sum(axis=0)
    h1 = (2.0 * eps * msq / u.f**3 + 2.0 * tau / u.f) * w
    h2 = (2.0 * eps / u.f) * w
    return DiagonalPreconditioner(h1, h2, grid.d)


def hessian_eigenvalues(f_j, m_j, eps: float, tau: float, dv: float, d: int):
    """Closed-form eigenvalues of one per-node Hessian block.

    Returns ``(zeta1, zeta2, zeta3)``: ``zeta1`` carries multiplicity d - 1
    (vacuous for d = 1), the pair ``zeta2 >= zeta3`` always exists. ``f_j``
    may be scalar or an array of nodes; ``m_j`` must reshape to ``(d,) +
    f_j.shape``.
    """
    f = np.asarray(f_j, dtype=float)
    m = np.asarray(m_j, dtype=float).reshape((d,) + f.shape)
    s = (m**2).sum(axis=0)
    w = dv**d
    zeta1 = 2.0 * eps / f * w
    a = eps * s / f**3 + (tau + eps) / f
    r = np.sqrt((eps * s / f**3) ** 2 + 2.0 * eps * s * (tau + eps) / f**4 + ((tau - eps) / f) ** 2)
    return zeta1, (a + r) * w, (a - r) * w


class _ProxSolver:
    """Projection onto {A u = b} in the H-norm, reusing one factorization.

    The inner matrix ``K = H1^{-1} + sum_l A_l H2^{-1} A_l^T`` is SPD while
    f > 0. One step of iterative refinement keeps the constraint residual
    near machine precision even when K is ill-conditioned (small eps).
    """

    def __init__(self, H: DiagonalPreconditioner, A: DivergenceOperator, method: str = "direct"):
        self.H = H
        self.A = A
        self.method = method
        self.inv_h1 = 1.0 / H.h1
        self.inv_h2 = 1.0 / H.h2
        if method == "direct":
            K = sp.diags(self.inv_h1)
            for block, block_t in zip(A.blocks, A.blocks_t):
                K = K + block.multiply(self.inv_h2[None, :]) @ block_t
            try:
                self._lu = spla.splu(K.tocsc())
            except RuntimeError as exc:  # singular/indefinite factorization
                raise CollisionSolverError(f"prox factorization failed: {exc}") from exc
            self._K = K.tocsr()
        elif method == "cg":
            self._diag = self.inv_h1 + sum(
                blk.multiply(blk) @ self.inv_h2 for blk in A.blocks
            )
            self._K = None
        else:
            raise ValueError(f"unknown linear solver {method!r}")

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        if self._K is not None:
            return self._K @ x
        out = self.inv_h1 * x
        for block, block_t in zip(self.A.blocks, self.A.blocks_t):
            out += block @ (self.inv_h2 * (block_t @ x))
        return out

    def _solve_inner(self, r: np.ndarray) -> np.ndarray:
        if self.method == "direct":
            lam = self._lu.solve(r)
            for _ in range(2):
                resid = r - self._matvec(lam)
                if np.abs(resid).max() <= 1e-13 * max(1.0, np.abs(r).max()):
                    break
                lam += self._lu.solve(resid)
            return lam
        n = r.size
        precond = spla.LinearOperator((n, n), matvec=lambda x: x / self._diag)
        op = spla.LinearOperator((n, n), matvec=self._matvec)
        lam, info = spla.cg(op, r, rtol=1e-13, atol=0.0, M=precond, maxiter=20 * n)
        if info != 0:
            raise CollisionSolverError(f"prox CG did not converge (info={info})")
        return lam

    def apply(self, u: np.ndarray, b: np.ndarray) -> np.ndarray:
        n = self.A.n
        r = b - self.A.apply(u)
        lam = self._solve_inner(r)
        z = u.copy()
        z[:n] += self.inv_h1 * lam
        for l, block_t in enumerate(self.A.blocks_t):
            z[n * (l + 1) : n * (l + 2)] += self.inv_h2 * (block_t @ lam)
        # absorb the inner-solve defect so A z = b holds to evaluation precision
        z[:n] += b - self.A.apply(z)
        return z


def prox(u: np.ndarray, H: DiagonalPreconditioner, A: DivergenceOperator, b: np.ndarray) -> np.ndarray:
    """Closed-form scaled proximal step ``u + H^{-1} A^T (A H^{-1} A^T)^{-1} (b - A u)``."""
    return _ProxSolver(H, A).apply(np.asarray(u, dtype=float), b)


@dataclass
class JKOTrace:
    objective: np.ndarray
    step: np.ndarray
    feasibility: np.ndarray
    min_f: np.ndarray


@dataclass
class JKOResult:
    f: np.ndarray
    m: np.ndarray
    iterations: int
    converged: bool
    trace: JKOTrace
    iterates: np.ndarray | None = None


def _floor_density(f_star: np.ndarray, floor: float) -> np.ndarray:
    """Lift entries below the positivity floor, preserving total mass."""
    mass = f_star.sum()
    if mass <= 0:
        raise ValueError("collision step needs positive total mass")
    lifted = np.maximum(f_star, floor)
    return lifted * (mass / lifted.sum())


def _jko_generic(
    f_star: np.ndarray,
    M: np.ndarray,
    eps: float,
    tau: float,
    grid: PhaseGrid,
    *,
    algorithm: str,
    gamma: float,
    theta: float,
    delta: float,
    n_max: int,
    linear_solver: str,
    record_iterates: bool,
) -> JKOResult:
    A = build_divergence_operator(grid.d, grid.n_v, grid.dv)
    d, n = grid.d, A.n
    b = f_star
    u = CollisionState(f_star.copy(), np.zeros((d, n)))
    F_old = objective(u, M, eps, tau, grid)

    tr_obj = [F_old]
    tr_step = [np.nan]
    tr_feas = [float(np.abs(A.apply(u.packed) - b).max())]
    tr_minf = [float(u.f.min())]
    history = [u.packed] if record_iterates else None

    converged = False
    k = 0
    for k in range(1, n_max + 1):
        g = gradient(u, M, eps, tau, grid)
        H = diag_hessian(u, eps, tau, grid)
        solver = _ProxSolver(H, A, method=linear_solver)
        hinv = H.packed_inverse
        u_pack = u.packed

        if algorithm == "fixed":
            step = gamma
            while True:
                z = solver.apply(u_pack - step * hinv * g, b)
                if z[:n].min() > 0.0:
                    break
                step *= 0.5
                if step < _MIN_STEP:
                    raise CollisionSolverError("fixed-step positivity unattainable")
            u_new_pack = z
            u_new = CollisionState.from_packed(u_new_pack, d)
            F_new = objective(u_new, M, eps, tau, grid)
        else:
            z = solver.apply(u_pack - hinv * g, b)
            v = z - u_pack
            gv = float(g @ v)
            step = 1.0
            while True:
                trial = u_pack + step * v
                if trial[:n].min() > 0.0:
                    u_new = CollisionState.from_packed(trial, d)
                    F_new = objective(u_new, M, eps, tau, grid)
                    # flat-region tie breaker: near the optimum both sides of
                    # the sufficient-decrease test sit at rounding level
                    if F_new <= F_old + step * theta * gv or abs(F_new - F_old) <= 4e-16 * abs(F_old):
                        u_new_pack = trial
                        break
                step *= 0.5
                if step < _MIN_STEP:
                    raise CollisionSolverError(
                        "line search underflow: positivity/descent irreconcilable"
                    )

        du_rel = float(np.abs(u_new_pack - u_pack).sum() / np.abs(u_pack).sum())
        df_rel = abs(F_new - F_old) / max(abs(F_old), _LOG_TINY)

        tr_obj.append(F_new)
        tr_step.append(step)
        tr_feas.append(float(np.abs(A.apply(u_new_pack) - b).max()))
        tr_minf.append(float(u_new_pack[:n].min()))
        if record_iterates:
            history.append(u_new_pack)

        u = u_new
        F_old = F_new
        if du_rel < delta and df_rel < delta:
            converged = True
            break

    trace = JKOTrace(
        np.asarray(tr_obj), np.asarray(tr_step), np.asarray(tr_feas), np.asarray(tr_minf)
    )
    iterates = np.asarray(history) if record_iterates else None
    return JKOResult(u.f, u.m, k, converged, trace, iterates)


def _jko_dispatch(
    f_star: np.ndarray,
    M: np.ndarray,
    eps: float,
    tau: float,
    grid: PhaseGrid,
    *,
    algorithm: str,
    gamma: float,
    theta: float,
    delta: float,
    n_max: int,
    floor: float = 1e-14,
    linear_solver: str = "direct",
    record_iterates: bool = False,
    backend: str | None = None,
) -> JKOResult:
    f_star = _floor_density(np.asarray(f_star, dtype=float), floor)
    M = np.asarray(M, dtype=float)
    if grid.d == 1 and backend != "generic":
        out = kernels.jko_solve_1d(
            f_star,
            M,
            eps,
            tau,
            grid.dv,
            algorithm=algorithm,
            gamma=gamma,
            theta=theta,
            delta=delta,
            n_max=n_max,
            record_iterates=record_iterates,
        )
        f, m, iters, conv, obj, step, feas, minf, history = out
        trace = JKOTrace(obj, step, feas, minf)
        return JKOResult(f, m.reshape(1, -1), iters, bool(conv), trace, history)
    return _jko_generic(
        f_star,
        M,
        eps,
        tau,
        grid,
        algorithm=algorithm,
        gamma=gamma,
        theta=theta,
        delta=delta,
        n_max=n_max,
        linear_solver=linear_solver,
        record_iterates=record_iterates,
    )


def jko_step_fixed(
    f_star: np.ndarray,
    M: np.ndarray,
    eps: float,
    tau: float,
    gamma: float,
    delta: float,
    n_max: int,
    grid: PhaseGrid,
    **kwargs,
) -> JKOResult:
    """One JKO step with fixed prox step size (gamma halved on positivity loss)."""
    return _jko_dispatch(
        f_star, M, eps, tau, grid,
        algorithm="fixed", gamma=gamma, theta=0.25, delta=delta, n_max=n_max, **kwargs,
    )


def jko_step_linesearch(
    f_star: np.ndarray,
    M: np.ndarray,
    eps: float,
    tau: float,
    theta: float,
    delta: float,
    n_max: int,
    grid: PhaseGrid,
    **kwargs,
) -> JKOResult:
    """One JKO step with backtracking line search (sufficient decrease + positivity)."""
    return _jko_dispatch(
        f_star, M, eps, tau, grid,
        algorithm="linesearch", gamma=1.0, theta=theta, delta=delta, n_max=n_max, **kwargs,
    )


@dataclass
class CollisionInfo:
    iterations: np.ndarray
    converged: np.ndarray
    max_constraint_residual: float


def collision_step(
    f_star: np.ndarray,
    rho_star: np.ndarray,
    grad_phi_star: np.ndarray,
    config: SolverConfig,
    grid: PhaseGrid,
) -> tuple[np.ndarray, CollisionInfo]:
    """Apply the implicit collision solve independently at every spatial node.

    ``grad_phi_star`` has shape (N_x,) for d = 1 or (N_x, d); ``eps`` may vary
    per node. Returns the updated field and per-node solver info.
    """
    n_x = f_star.shape[0]
    eps = config.eps_at(n_x)
    if np.any(rho_star <= 0):
        raise ValueError("collision step needs rho* > 0 at every node")
    gp = np.asarray(grad_phi_star, dtype=float)
    if gp.ndim == 1:
        gp = np.column_stack([gp] + [np.zeros(n_x)] * (grid.d - 1))

    flat = grid.flatten_v(f_star)

    def solve_node(i: int):
        M = local_maxwellian(rho_star[i], gp[i], grid)
        try:
            return _jko_dispatch(
                flat[i],
                M,
                float(eps[i]),
                config.tau,
                grid,
                algorithm=config.algorithm,
                gamma=config.gamma,
                theta=config.theta,
                delta=config.delta,
                n_max=config.n_max,
                floor=config.positivity_floor,
                linear_solver=config.linear_solver if grid.d == 3 else "direct",
            )
        except CollisionSolverError as exc:
            raise CollisionSolverError(f"collision solve failed at node {i}: {exc}") from exc

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(solve_node, range(n_x)))
    else:
        results = [solve_node(i) for i in range(n_x)]

    f_new = np.stack([grid.unflatten_v(r.f) for r in results])
    info = CollisionInfo(
        iterations=np.array([r.iterations for r in results]),
        converged=np.array([r.converged for r in results]),
        max_constraint_residual=max(float(r.trace.feasibility.max()) for r in results),
    )
    return f_new, info


def p_matrix(f: np.ndarray, m: np.ndarray, eps: float, tau: float, grid: PhaseGrid) -> np.ndarray:
    """Dense ``P = (I + D H2^{-1} D^T H1)^{-1}`` (d = 1 positivity analysis)."""
    if grid.d != 1:
        raise ValueError("P-matrix analysis is one dimensional")
    state = CollisionState(np.asarray(f, float), np.atleast_2d(np.asarray(m, float)))
    H = diag_hessian(state, eps, tau, grid)
    D = build_divergence_operator(1, grid.n_v, grid.dv).blocks[0].toarray()
    K = np.eye(grid.n_v) + D @ np.diag(1.0 / H.h2) @ D.T @ np.diag(H.h1)
    return np.linalg.inv(K)


def p_matrix_norm(f: np.ndarray, m: np.ndarray, eps: float, tau: float, grid: PhaseGrid) -> float:
    return float(np.linalg.norm(p_matrix(f, m, eps, tau, grid), 2))
