"""Hot-loop kernels for the one dimensional JKO solve.

At import time the compiled Cython kernel is preferred; the pure-numpy
fallback provides the identical interface (and identical algorithm) when
the extension is unavailable or ``VPFP_PURE_PYTHON=1`` is set. Both expose

    jko_solve_1d(f_star, M, eps, tau, dv, *, algorithm, gamma, theta,
                 delta, n_max, record_iterates)

returning ``(f, m, iterations, converged, obj, step, feas, min_f,
iterates-or-None)``. ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

from . import _jko_py

if os.environ.get("VPFP_PURE_PYTHON", "") == "1":
    _impl = _jko_py
    BACKEND = "python"
else:
    try:
        from . import _jko_cy as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _jko_py
        BACKEND = "python"

jko_solve_1d = _impl.jko_solve_1d

__all__ = ["jko_solve_1d", "BACKEND", "get_backend"]


def get_backend(name: str | None = None):
    """Return a specific backend module ("compiled"/"python") or the active one."""
    if name is None or name == BACKEND:
        return _impl
    if name == "python":
        return _jko_py
    if name == "compiled":
        from . import _jko_cy

        return _jko_cy
    raise ValueError(f"unknown kernel backend {name!r}")
