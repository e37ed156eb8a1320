import numpy as np
import pytest
import sympy as sp

from vpfp.collision import (
    CollisionState,
    DiagonalPreconditioner,
    PositivityError,
    build_divergence_operator,
    diag_hessian,
    gradient,
    hessian_eigenvalues,
    local_maxwellian,
    objective,
    p_matrix,
    p_matrix_norm,
    prox,
)
from vpfp.core import PhaseGrid


# ---------------------------------------------------------------- Maxwellian

def test_maxwellian_basic(homog_grid):
    # rho = sqrt(2 pi), no field: M(v) = exp(-v^2/2)
    grid = homog_grid
    M = local_maxwellian(np.sqrt(2 * np.pi), 0.0, grid)
    assert np.allclose(M, np.exp(-grid.v_axis**2 / 2), rtol=1e-14)


def test_maxwellian_shift_identity():
    grid = PhaseGrid(n_x=1, l_v=6.0, n_v=96, d=1)
    c = grid.dv * 3  # exact multiple of dv: shifted nodes coincide
    m_shift = local_maxwellian(1.0, c, grid)
    m_zero = local_maxwellian(1.0, 0.0, grid)
    assert np.allclose(m_shift[: 96 - 3], m_zero[3:], rtol=1e-13)


def test_maxwellian_mass():
    # midpoint sum matches the box quadrature to < 1e-8; the defect against
    # rho itself is the Gaussian tail, ~ rho * Q(L_v - |grad phi|) < 1e-6
    grid = PhaseGrid(n_x=1, l_v=6.0, n_v=64, d=1)
    for gp in (0.0, 0.7, -1.0):
        M = local_maxwellian(2.3, gp, grid)
        w = np.linspace(-6, 6, 2_000_001)
        box_mass = np.trapezoid(2.3 / np.sqrt(2 * np.pi) * np.exp(-((w + gp) ** 2) / 2), w)
        assert abs(M.sum() * grid.dv - box_mass) < 1e-8
        assert abs(M.sum() * grid.dv - 2.3) < 1e-6


def test_maxwellian_rejects_nonpositive_rho(homog_grid):
    with pytest.raises(ValueError):
        local_maxwellian(0.0, 0.0, homog_grid)


def test_maxwellian_2d_argmax():
    grid = PhaseGrid(n_x=1, l_v=5.0, n_v=40, d=2)
    gp = np.array([0.6, -0.4])
    M = grid.unflatten_v(local_maxwellian(1.0, gp, grid)[None])[0]
    j = np.unravel_index(np.argmax(M), M.shape)
    v1, v2 = grid.v_axis[j[0]], grid.v_axis[j[1]]
    assert abs(v1 + gp[0]) <= grid.dv / 2 + 1e-12
    assert abs(v2 + gp[1]) <= grid.dv / 2 + 1e-12


# ------------------------------------------------------- divergence operator

def test_center_difference_matrix_paper_form():
    op = build_divergence_operator(1, 3, 1.0)
    expected = 0.5 * np.array([[1, 1, 0], [-1, 0, 1], [0, -1, -1]])
    assert np.allclose(op.blocks[0].toarray(), expected)


@pytest.mark.parametrize("d,n_v", [(1, 8), (2, 6), (3, 4)])
def test_zero_flux_column_sums(d, n_v, rng):
    op = build_divergence_operator(d, n_v, 0.37)
    for block in op.blocks:
        m = rng.normal(size=n_v**d)
        assert abs((block @ m).sum()) < 1e-12 * np.abs(m).sum()


def test_divergence_axis_orientation(rng):
    # compare both 2D blocks to a nested-loop application of the 1D stencil
    n_v, dv = 6, 0.5
    grid = PhaseGrid(n_x=1, l_v=n_v * dv / 2, n_v=n_v, d=2)
    op = build_divergence_operator(2, n_v, dv)
    d_v = build_divergence_operator(1, n_v, dv).blocks[0].toarray()

    field = rng.normal(size=(n_v, n_v))  # axes (v1, v2)
    flat = grid.flatten_v(field[None])[0]

    oracle_ax1 = np.empty_like(field)
    oracle_ax2 = np.empty_like(field)
    for j2 in range(n_v):
        oracle_ax1[:, j2] = d_v @ field[:, j2]
    for j1 in range(n_v):
        oracle_ax2[j1, :] = d_v @ field[j1, :]

    out1 = grid.unflatten_v((op.blocks[0] @ flat)[None])[0]
    out2 = grid.unflatten_v((op.blocks[1] @ flat)[None])[0]
    assert np.allclose(out1, oracle_ax1, atol=1e-13)
    assert np.allclose(out2, oracle_ax2, atol=1e-13)


def test_divergence_full_operator_packs_identity(rng):
    op = build_divergence_operator(2, 4, 0.25)
    u = rng.normal(size=3 * 16)
    assert np.allclose(op.full @ u, op.apply(u), atol=1e-14)


# ----------------------------------------------------- objective and gradient

def _random_state(rng, n=8, d=1):
    f = rng.uniform(0.4, 2.0, n)
    m = rng.normal(0.0, 0.7, (d, n))
    return CollisionState(f, m)


def test_objective_zero_at_equilibrium(homog_grid, double_bump):
    _, M, _ = double_bump
    u = CollisionState(M.copy(), np.zeros((1, M.size)))
    assert objective(u, M, 0.3, 0.05, homog_grid) == pytest.approx(0.0, abs=1e-15)


def test_objective_single_node_value():
    grid = PhaseGrid(n_x=1, l_v=1.0, n_v=2, d=1)  # dv = 1
    u = CollisionState(np.array([1.0, 1.0]), np.array([[2.0, 0.0]]))
    M = np.array([1.0, 1.0])
    # eps |m|^2 / f with tau = 0: 4 on the first node
    assert objective(u, M, 1.0, 0.0, grid) == pytest.approx(4.0)


def test_objective_kinetic_term_nonnegative(rng, homog_grid):
    grid = PhaseGrid(n_x=1, l_v=2.0, n_v=8, d=1)
    M = rng.uniform(0.5, 1.5, 8)
    for _ in range(10):
        u = _random_state(rng)
        base = CollisionState(u.f, np.zeros_like(u.m))
        f_val = objective(u, M, 0.7, 0.05, grid)
        f_base = objective(base, M, 0.7, 0.05, grid)
        assert f_val >= f_base - 1e-14
    assert objective(base, M, 0.7, 0.05, grid) == pytest.approx(f_base)


def test_objective_positivity_signal(homog_grid, double_bump):
    _, M, _ = double_bump
    bad = CollisionState(M.copy(), np.zeros((1, M.size)))
    bad.f[3] = -1e-12
    with pytest.raises(PositivityError):
        objective(bad, M, 1.0, 0.05, homog_grid)
    with pytest.raises(PositivityError):
        gradient(bad, M, 1.0, 0.05, homog_grid)


def test_gradient_at_equilibrium(homog_grid, double_bump):
    _, M, _ = double_bump
    tau = 0.05
    u = CollisionState(M.copy(), np.zeros((1, M.size)))
    g = gradient(u, M, 1.0, tau, homog_grid)
    n = M.size
    assert np.allclose(g[:n], 2 * tau * homog_grid.dv)
    assert np.allclose(g[n:], 0.0)


def test_gradient_momentum_block_at_equilibrium(rng, homog_grid, double_bump):
    _, M, _ = double_bump
    eps = 0.3
    m = rng.normal(size=(1, M.size))
    u = CollisionState(M.copy(), m)
    g = gradient(u, M, eps, 0.05, homog_grid)
    assert np.allclose(g[M.size :], 2 * eps * m[0] / M * homog_grid.dv, rtol=1e-13)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_gradient_matches_central_differences(d, rng):
    n_v = 4
    grid = PhaseGrid(n_x=1, l_v=1.0, n_v=n_v, d=d)
    n = n_v**d
    u = CollisionState(rng.uniform(0.5, 2.0, n), rng.normal(0, 0.5, (d, n)))
    M = rng.uniform(0.5, 1.5, n)
    eps, tau = 0.37, 0.05
    g = gradient(u, M, eps, tau, grid)
    direction = rng.normal(size=(1 + d) * n)
    h = 1e-6
    plus = CollisionState.from_packed(u.packed + h * direction, d)
    minus = CollisionState.from_packed(u.packed - h * direction, d)
    fd = (objective(plus, M, eps, tau, grid) - objective(minus, M, eps, tau, grid)) / (2 * h)
    assert abs(fd - g @ direction) / abs(fd) < 1e-6


# -------------------------------------------------------------- hessian diag

def _sympy_hessian_diag(f, m, M, eps, tau, dv):
    """Symbolic dense Hessian of F on an N_v = 4, d = 1 instance."""
    n = len(f)
    fs = sp.symbols(f"f0:{n}", positive=True)
    ms = sp.symbols(f"m0:{n}")
    F = sum(
        (eps * ms[j] ** 2 / fs[j] + 2 * tau * fs[j] * sp.log(fs[j] / M[j])) * dv
        for j in range(n)
    )
    allv = list(fs) + list(ms)
    subs = dict(zip(fs, f)) | dict(zip(ms, m))
    hess = sp.hessian(F, allv)
    return np.array([float(hess[i, i].subs(subs)) for i in range(2 * n)])


def test_diag_hessian_matches_symbolic_oracle(rng):
    grid = PhaseGrid(n_x=1, l_v=1.0, n_v=4, d=1)
    u = _random_state(rng, n=4)
    M = rng.uniform(0.5, 1.5, 4)
    eps, tau = 0.23, 0.07
    H = diag_hessian(u, eps, tau, grid)
    ref = _sympy_hessian_diag(u.f, u.m[0], M, eps, tau, grid.dv)
    ours = np.concatenate([H.h1, H.h2])
    assert np.abs(ours - ref).max() < 1e-12


def test_diag_hessian_zero_momentum(homog_grid, double_bump):
    f0, _, _ = double_bump
    eps, tau = 0.4, 0.05
    u = CollisionState(f0.copy(), np.zeros((1, f0.size)))
    H = diag_hessian(u, eps, tau, homog_grid)
    assert np.allclose(H.h1, 2 * tau / f0 * homog_grid.dv, rtol=1e-14)
    assert np.allclose(H.h2, 2 * eps / f0 * homog_grid.dv, rtol=1e-14)
    assert H.h1.min() > 0 and H.h2.min() > 0


# ---------------------------------------------------------------- eigenvalues

def test_eigenvalues_zero_momentum_collapse():
    f, eps, tau, dv = 0.8, 0.3, 0.05, 0.25
    z1, z2, z3 = hessian_eigenvalues(f, np.zeros(3), eps, tau, dv, 3)
    w = dv**3
    assert z1 == pytest.approx(2 * eps / f * w, rel=1e-14)
    assert z2 == pytest.approx(2 * max(tau, eps) / f * w, rel=1e-13)
    assert z3 == pytest.approx(2 * min(tau, eps) / f * w, rel=1e-13)


def test_eigenvalues_match_dense_block(rng):
    eps, tau, dv = 0.11, 0.06, 0.5
    for _ in range(5):
        f = float(rng.uniform(0.3, 2.0))
        m = rng.normal(0, 0.8, 3)
        z1, z2, z3 = hessian_eigenvalues(f, m, eps, tau, dv, 3)
        w = dv**3
        blk = np.zeros((4, 4))
        blk[0, 0] = (2 * eps * (m**2).sum() / f**3 + 2 * tau / f) * w
        for l in range(3):
            blk[0, l + 1] = blk[l + 1, 0] = -2 * eps * m[l] / f**2 * w
            blk[l + 1, l + 1] = 2 * eps / f * w
        dense = np.sort(np.linalg.eigvalsh(blk))
        assert np.abs(np.sort([z1, z1, z3, z2]) - dense).max() < 1e-10


def test_eigenvalues_positive_under_positivity(rng):
    for _ in range(20):
        f = rng.uniform(0.01, 3.0, 6)
        m = rng.normal(0, 1.0, (2, 6))
        z1, z2, z3 = hessian_eigenvalues(f, m, 0.2, 0.05, 0.25, 2)
        assert np.all(z1 > 0) and np.all(z2 > 0) and np.all(z3 > 0)


# ----------------------------------------------------------------------- prox

def _random_prox_instance(rng, n=4, d=1, dv=0.5):
    A = build_divergence_operator(d, n, dv)
    nn = n**d
    H = DiagonalPreconditioner(rng.uniform(0.5, 3.0, nn), rng.uniform(0.5, 3.0, nn), d)
    u = rng.normal(size=(1 + d) * nn)
    b = rng.normal(size=nn)
    return A, H, u, b


def test_prox_feasible_point_fixed(rng):
    A, H, u, b = _random_prox_instance(rng)
    b = A.apply(u)  # make u feasible
    z = prox(u, H, A, b)
    assert np.abs(z - u).max() < 1e-12


def test_prox_feasibility_by_construction(rng):
    for d in (1, 2):
        A, H, u, b = _random_prox_instance(rng, n=4, d=d)
        z = prox(u, H, A, b)
        assert np.abs(A.apply(z) - b).max() < 1e-10


def test_prox_matches_dense_kkt_oracle(rng):
    for _ in range(5):
        A, H, u, b = _random_prox_instance(rng)
        z = prox(u, H, A, b)
        h = np.concatenate([H.h1, H.h2])
        a_dense = A.full.toarray()
        kkt = np.block([
            [np.diag(h), a_dense.T],
            [a_dense, np.zeros((A.n, A.n))],
        ])
        sol = np.linalg.solve(kkt, np.concatenate([h * u, b]))
        assert np.abs(z - sol[: u.size]).max() < 1e-10


def test_prox_idempotent(rng):
    A, H, u, b = _random_prox_instance(rng)
    z1 = prox(u, H, A, b)
    z2 = prox(z1, H, A, b)
    assert np.abs(z2 - z1).max() < 1e-12


# ------------------------------------------------------------------- P matrix

def _p_instance(rng, grid):
    f = rng.uniform(0.3, 2.0, grid.n_v)
    m = rng.normal(0, 0.5, (1, grid.n_v))
    return f, m


def test_p_matrix_norm_finite(rng):
    grid = PhaseGrid(n_x=1, l_v=2.0, n_v=16, d=1)
    f, m = _p_instance(rng, grid)
    val = p_matrix_norm(f, m, 1.0, 0.05, grid)
    assert np.isfinite(val) and val > 0


def test_p_matrix_rank_deficiency(rng):
    # D H2^{-1} D^T H1 has exactly one zero eigenvalue
    grid = PhaseGrid(n_x=1, l_v=2.0, n_v=12, d=1)
    f, m = _p_instance(rng, grid)
    from vpfp.collision import diag_hessian as dh

    H = dh(CollisionState(f, m), 1.0, 0.05, grid)
    D = build_divergence_operator(1, 12, grid.dv).blocks[0].toarray()
    B = D @ np.diag(1.0 / H.h2) @ D.T @ np.diag(H.h1)
    svals = np.linalg.svd(B, compute_uv=False)
    assert svals[-1] < 1e-10 * svals[0]
    assert svals[-2] > 1e-6 * svals[0]


def test_p_matrix_eigenvalue_eps_scaling(rng):
    # non-unit eigenvalues of P are eps/(lambda + eps): drop ~100x per 100x in eps
    grid = PhaseGrid(n_x=1, l_v=2.0, n_v=12, d=1)
    f, m = _p_instance(rng, grid)
    tau = 0.05
    sizes = {}
    for eps in (1e-2, 1e-4, 1e-6):
        P = p_matrix(f, m, eps, tau, grid)
        eig = np.sort(np.abs(np.linalg.eigvals(P)))
        # largest eigenvalue ~ 1 (constraint-kernel direction), rest O(eps)
        assert abs(eig[-1] - 1.0) < 1e-3
        sizes[eps] = eig[:-1].max()
    r1 = sizes[1e-2] / sizes[1e-4]
    r2 = sizes[1e-4] / sizes[1e-6]
    assert 50 < r1 < 200 and 50 < r2 < 200
