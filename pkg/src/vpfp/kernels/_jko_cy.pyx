# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled d = 1 JKO inner loop.

Same algorithm as ``_jko_py`` (the numpy fallback); the pentadiagonal SPD
prox system is factored with LAPACK dpbtrf/dpbtrs and refined once or twice
to keep the constraint residual at machine level.
"""

import numpy as np

cimport cython
from libc.math cimport fabs, log, sqrt

from scipy.linalg.cython_lapack cimport dpbtrf, dpbtrs

from ._jko_py import KernelError

cdef double MIN_STEP = 2.0 ** -60
cdef double TINY = 1e-300


cdef void _div(double* m, double* out, double s, int n) noexcept nogil:
    cdef int i
    out[0] = (m[0] + m[1]) * s
    for i in range(1, n - 1):
        out[i] = (m[i + 1] - m[i - 1]) * s
    out[n - 1] = (-m[n - 2] - m[n - 1]) * s


cdef void _div_t(double* lam, double* out, double s, int n) noexcept nogil:
    cdef int i
    out[0] = (lam[0] - lam[1]) * s
    for i in range(1, n - 1):
        out[i] = (lam[i - 1] - lam[i + 1]) * s
    out[n - 1] = (lam[n - 2] - lam[n - 1]) * s


cdef void _assemble_bands(double* inv_h1, double* inv_h2, double s,
                          double* d0, double* d1, double* d2, int n) noexcept nogil:
    cdef double s2 = s * s
    cdef int i
    for i in range(n):
        d0[i] = inv_h1[i]
        d1[i] = 0.0
        d2[i] = 0.0
    d0[0] += s2 * (inv_h2[0] + inv_h2[1])
    for i in range(1, n - 1):
        d0[i] += s2 * (inv_h2[i - 1] + inv_h2[i + 1])
    d0[n - 1] += s2 * (inv_h2[n - 2] + inv_h2[n - 1])
    d1[0] = -s2 * inv_h2[0]
    d1[n - 2] = -s2 * inv_h2[n - 1]
    for i in range(n - 2):
        d2[i] = -s2 * inv_h2[i + 1]


cdef void _band_matvec(double* d0, double* d1, double* d2,
                       double* x, double* y, int n) noexcept nogil:
    cdef int i
    for i in range(n):
        y[i] = d0[i] * x[i]
    for i in range(n - 1):
        y[i] += d1[i] * x[i + 1]
        y[i + 1] += d1[i] * x[i]
    for i in range(n - 2):
        y[i] += d2[i] * x[i + 2]
        y[i + 2] += d2[i] * x[i]


cdef int _factor(double* d0, double* d1, double* d2, double* ds,
                 double* kab, int n) noexcept nogil:
    """Equilibrate symmetrically and Cholesky-factor (LAPACK lower-banded)."""
    cdef int i, info = 0, kd = 2, ldab = 3
    cdef char uplo = c'L'
    for i in range(n):
        ds[i] = 1.0 / sqrt(d0[i])
    for i in range(n):
        kab[3 * i] = 1.0
        kab[3 * i + 1] = d1[i] * ds[i] * ds[i + 1] if i < n - 1 else 0.0
        kab[3 * i + 2] = d2[i] * ds[i] * ds[i + 2] if i < n - 2 else 0.0
    dpbtrf(&uplo, &n, &kd, kab, &ldab, &info)
    return info


cdef void _band_solve(double* kab, double* ds, double* rhs, int n) noexcept nogil:
    """Solve K x = rhs through the equilibrated factor, in place."""
    cdef int info = 0, kd = 2, ldab = 3, nrhs = 1, i
    cdef char uplo = c'L'
    for i in range(n):
        rhs[i] *= ds[i]
    dpbtrs(&uplo, &n, &kd, &nrhs, kab, &ldab, rhs, &n, &info)
    for i in range(n):
        rhs[i] *= ds[i]


cdef void _refined_solve(double* d0, double* d1, double* d2, double* kab, double* ds,
                         double* r, double* lam, double* work, int n) noexcept nogil:
    """lam = K^{-1} r with up to two iterative-refinement passes."""
    cdef int i, p
    cdef double rmax = 1.0, resmax
    for i in range(n):
        lam[i] = r[i]
        if fabs(r[i]) > rmax:
            rmax = fabs(r[i])
    _band_solve(kab, ds, lam, n)
    for p in range(2):
        _band_matvec(d0, d1, d2, lam, work, n)
        resmax = 0.0
        for i in range(n):
            work[i] = r[i] - work[i]
            if fabs(work[i]) > resmax:
                resmax = fabs(work[i])
        if resmax <= 1e-14 * rmax:
            break
        _band_solve(kab, ds, work, n)
        for i in range(n):
            lam[i] += work[i]


cdef void _prox(double* kab, double* ds, double* d0, double* d1, double* d2,
                double* inv_h1, double* inv_h2, double s,
                double* w_f, double* w_m, double* b,
                double* z_f, double* z_m,
                double* r, double* lam, double* work, int n) noexcept nogil:
    cdef int i
    _div(w_m, r, s, n)
    for i in range(n):
        r[i] = b[i] - w_f[i] - r[i]
    _refined_solve(d0, d1, d2, kab, ds, r, lam, work, n)
    for i in range(n):
        z_f[i] = w_f[i] + inv_h1[i] * lam[i]
    _div_t(lam, work, s, n)
    for i in range(n):
        z_m[i] = w_m[i] + inv_h2[i] * work[i]
    # absorb the inner-solve defect so A z = b holds to evaluation precision
    _div(z_m, work, s, n)
    for i in range(n):
        z_f[i] += b[i] - z_f[i] - work[i]


cdef double _objective(double* f, double* m, double* M,
                       double eps, double tau, double dv, int n) noexcept nogil:
    cdef double acc = 0.0
    cdef int i
    for i in range(n):
        acc += eps * m[i] * m[i] / f[i] + 2.0 * tau * f[i] * log(f[i] / M[i])
    return acc * dv


cdef double _feas(double* f, double* m, double* b, double s, double* work, int n) noexcept nogil:
    cdef double mx = 0.0
    cdef int i
    _div(m, work, s, n)
    for i in range(n):
        if fabs(f[i] + work[i] - b[i]) > mx:
            mx = fabs(f[i] + work[i] - b[i])
    return mx


def jko_solve_1d(f_star, M, double eps, double tau, double dv, *,
                 str algorithm, double gamma, double theta, double delta,
                 int n_max, bint record_iterates=False):
    fs = np.ascontiguousarray(f_star, dtype=np.float64)
    Ma = np.ascontiguousarray(M, dtype=np.float64)
    cdef int n = fs.shape[0]
    cdef double s = 1.0 / (2.0 * dv)
    cdef bint fixed = algorithm == "fixed"

    f_arr = fs.copy()
    m_arr = np.zeros(n)
    obj = np.empty(n_max + 1)
    stp = np.empty(n_max + 1)
    feas_arr = np.empty(n_max + 1)
    minf_arr = np.empty(n_max + 1)
    hist = np.empty((n_max + 1, 2 * n)) if record_iterates else None

    cdef double[::1] b = fs
    cdef double[::1] Mv = Ma
    cdef double[::1] f = f_arr
    cdef double[::1] m = m_arr
    cdef double[::1] g_f = np.empty(n)
    cdef double[::1] g_m = np.empty(n)
    cdef double[::1] inv_h1 = np.empty(n)
    cdef double[::1] inv_h2 = np.empty(n)
    cdef double[::1] d0 = np.empty(n)
    cdef double[::1] d1 = np.empty(n)
    cdef double[::1] d2 = np.empty(n)
    cdef double[::1] kab = np.empty(3 * n)
    cdef double[::1] dsc = np.empty(n)
    cdef double[::1] w_f = np.empty(n)
    cdef double[::1] w_m = np.empty(n)
    cdef double[::1] z_f = np.empty(n)
    cdef double[::1] z_m = np.empty(n)
    cdef double[::1] r = np.empty(n)
    cdef double[::1] lam = np.empty(n)
    cdef double[::1] work = np.empty(n)
    cdef double[::1] obj_v = obj
    cdef double[::1] stp_v = stp
    cdef double[::1] feas_v = feas_arr
    cdef double[::1] minf_v = minf_arr
    cdef double[:, ::1] hist_v = hist if record_iterates else None

    cdef double F_old = _objective(&f[0], &m[0], &Mv[0], eps, tau, dv, n)
    cdef double F_new = F_old, step = 0.0, gv, du, unorm, df_rel, mn
    cdef int k = 0, i, info
    cdef bint converged = False, fail_pos = False, fail_desc = False

    obj_v[0] = F_old
    stp_v[0] = float("nan")
    feas_v[0] = _feas(&f[0], &m[0], &b[0], s, &work[0], n)
    mn = f[0]
    for i in range(1, n):
        if f[i] < mn:
            mn = f[i]
    minf_v[0] = mn
    if record_iterates:
        for i in range(n):
            hist_v[0, i] = f[i]
            hist_v[0, n + i] = m[i]

    with nogil:
        for k in range(1, n_max + 1):
            for i in range(n):
                g_f[i] = (-eps * m[i] * m[i] / (f[i] * f[i])
                          + 2.0 * tau * (log(f[i] / Mv[i]) + 1.0)) * dv
                g_m[i] = (2.0 * eps / f[i]) * m[i] * dv
                inv_h1[i] = 1.0 / ((2.0 * eps * m[i] * m[i] / (f[i] * f[i] * f[i])
                                    + 2.0 * tau / f[i]) * dv)
                inv_h2[i] = f[i] / (2.0 * eps * dv)
            _assemble_bands(&inv_h1[0], &inv_h2[0], s, &d0[0], &d1[0], &d2[0], n)
            info = _factor(&d0[0], &d1[0], &d2[0], &dsc[0], &kab[0], n)
            if info != 0:
                with gil:
                    raise KernelError(f"banded factorization failed (info={info})")

            if fixed:
                step = gamma
                while True:
                    for i in range(n):
                        w_f[i] = f[i] - step * g_f[i] * inv_h1[i]
                        w_m[i] = m[i] - step * g_m[i] * inv_h2[i]
                    _prox(&kab[0], &dsc[0], &d0[0], &d1[0], &d2[0], &inv_h1[0], &inv_h2[0], s,
                          &w_f[0], &w_m[0], &b[0], &z_f[0], &z_m[0],
                          &r[0], &lam[0], &work[0], n)
                    mn = z_f[0]
                    for i in range(1, n):
                        if z_f[i] < mn:
                            mn = z_f[i]
                    if mn > 0.0:
                        break
                    step *= 0.5
                    if step < MIN_STEP:
                        fail_pos = True
                        break
                if fail_pos:
                    break
                F_new = _objective(&z_f[0], &z_m[0], &Mv[0], eps, tau, dv, n)
            else:
                for i in range(n):
                    w_f[i] = f[i] - g_f[i] * inv_h1[i]
                    w_m[i] = m[i] - g_m[i] * inv_h2[i]
                _prox(&kab[0], &dsc[0], &d0[0], &d1[0], &d2[0], &inv_h1[0], &inv_h2[0], s,
                      &w_f[0], &w_m[0], &b[0], &z_f[0], &z_m[0],
                      &r[0], &lam[0], &work[0], n)
                # z holds the unit-step target; reuse w as the search direction
                gv = 0.0
                for i in range(n):
                    w_f[i] = z_f[i] - f[i]
                    w_m[i] = z_m[i] - m[i]
                    gv += g_f[i] * w_f[i] + g_m[i] * w_m[i]
                step = 1.0
                while True:
                    mn = 1.0
                    for i in range(n):
                        z_f[i] = f[i] + step * w_f[i]
                        if z_f[i] < mn:
                            mn = z_f[i]
                    if mn > 0.0:
                        for i in range(n):
                            z_m[i] = m[i] + step * w_m[i]
                        F_new = _objective(&z_f[0], &z_m[0], &Mv[0], eps, tau, dv, n)
                        if (F_new <= F_old + step * theta * gv
                                or fabs(F_new - F_old) <= 4e-16 * fabs(F_old)):
                            break
                    step *= 0.5
                    if step < MIN_STEP:
                        fail_desc = True
                        break
                if fail_desc:
                    break

            du = 0.0
            unorm = 0.0
            for i in range(n):
                du += fabs(z_f[i] - f[i]) + fabs(z_m[i] - m[i])
                unorm += fabs(f[i]) + fabs(m[i])
                f[i] = z_f[i]
                m[i] = z_m[i]
            df_rel = fabs(F_new - F_old) / max(fabs(F_old), TINY)
            F_old = F_new

            obj_v[k] = F_new
            stp_v[k] = step
            feas_v[k] = _feas(&f[0], &m[0], &b[0], s, &work[0], n)
            mn = f[0]
            for i in range(1, n):
                if f[i] < mn:
                    mn = f[i]
            minf_v[k] = mn
            if record_iterates:
                for i in range(n):
                    hist_v[k, i] = f[i]
                    hist_v[k, n + i] = m[i]

            if du / unorm < delta and df_rel < delta:
                converged = True
                break

    if fail_pos:
        raise KernelError("fixed-step positivity unattainable")
    if fail_desc:
        raise KernelError("line search underflow: positivity/descent irreconcilable")

    sl = slice(0, k + 1)
    history = hist[sl].copy() if record_iterates else None
    return (f_arr, m_arr, k, bool(converged), obj[sl].copy(), stp[sl].copy(),
            feas_arr[sl].copy(), minf_arr[sl].copy(), history)
