"""Phase-space grids, moments, and solver configuration.

Conventions used throughout the package:

* space is one dimensional and periodic, nodes ``x_i = x_min + i*dx`` for
  ``i = 1..N_x`` (the left endpoint is the periodic image of the right one);
* velocity is a tensor grid of cell centers ``v = -L_v + (j - 1/2)*dv`` in
  each of the ``d`` axes, ``d in {1, 2, 3}``;
* distribution arrays have shape ``(N_x,) + (N_v,)*d`` with velocity axis
  ``k`` holding the ``v_k`` coordinate;
* flattened velocity indexing is first-axis-fastest (Fortran order), i.e.
  ``j = j1 + (j2-1)*N_v + (j3-1)*N_v**2`` for one-based ``(j1, j2, j3)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform tensor-product discretization of phase space.

    ``x_min``/``x_max`` bound the periodic spatial interval (the canonical
    domain is ``[-L_x, L_x)`` but shifted intervals such as ``[0, 1)`` are
    allowed). ``l_v`` is the half-width of the velocity box per axis.
    """

    n_x: int
    l_v: float
    n_v: int
    d: int = 1
    x_min: float = -0.5
    x_max: float = 0.5

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"velocity dimension must be 1, 2 or 3, got {self.d}")
        if self.n_x < 1 or self.n_v < 2:
            raise ValueError("need n_x >= 1 and n_v >= 2")
        if not (self.x_max > self.x_min and self.l_v > 0):
            raise ValueError("empty domain")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def dv(self) -> float:
        return 2.0 * self.l_v / self.n_v

    @property
    def l_x(self) -> float:
        """Half-width of the spatial domain."""
        return 0.5 * (self.x_max - self.x_min)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(1, self.n_x + 1)

    @property
    def v_axis(self) -> np.ndarray:
        """Velocity cell centers along one axis."""
        return -self.l_v + (np.arange(1, self.n_v + 1) - 0.5) * self.dv

    @property
    def v_shape(self) -> tuple[int, ...]:
        return (self.n_v,) * self.d

    @property
    def n_v_total(self) -> int:
        return self.n_v**self.d

    @property
    def cell_measure_v(self) -> float:
        return self.dv**self.d

    def v_mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``v_shape``, one per velocity axis."""
        return np.meshgrid(*(self.v_axis,) * self.d, indexing="ij")

    def v_components_flat(self) -> np.ndarray:
        """(d, N_v^d) velocity coordinates in linearized (first-axis-fastest) order."""
        mesh = self.v_mesh()
        return np.stack([c.ravel(order="F") for c in mesh])

    def flatten_v(self, values: np.ndarray) -> np.ndarray:
        """Flatten the trailing velocity axes in linearized (v1-fastest) order."""
        n_lead = values.ndim - self.d
        lead = values.shape[:n_lead]
        perm = tuple(range(n_lead)) + tuple(range(values.ndim - 1, n_lead - 1, -1))
        return values.transpose(perm).reshape(lead + (self.n_v_total,))

    def unflatten_v(self, values: np.ndarray) -> np.ndarray:
        lead = values.shape[:-1]
        arr = values.reshape(lead + self.v_shape[::-1])
        n_lead = len(lead)
        perm = tuple(range(n_lead)) + tuple(range(arr.ndim - 1, n_lead - 1, -1))
        return arr.transpose(perm)


def linearize_index(multi: Sequence[int], n_v: int) -> int:
    """One-based multi-index ``(j1..jd)`` -> one-based linear index, first axis fastest."""
    j = 0
    for k, jk in enumerate(reversed(multi)):
        if not 1 <= jk <= n_v:
            raise IndexError(f"index {jk} out of range 1..{n_v}")
        j = j * n_v + (jk - 1)
    return j + 1


def delinearize_index(j: int, n_v: int, d: int) -> tuple[int, ...]:
    """Inverse of :func:`linearize_index`."""
    if not 1 <= j <= n_v**d:
        raise IndexError(f"index {j} out of range 1..{n_v**d}")
    j0 = j - 1
    out = []
    for _ in range(d):
        out.append(j0 % n_v + 1)
        j0 //= n_v
    return tuple(out)


def density(f: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Velocity midpoint-rule density, ``rho_i = sum_j f_ij dv^d``."""
    axes = tuple(range(f.ndim - grid.d, f.ndim))
    return f.sum(axis=axes) * grid.cell_measure_v


def current(f: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """First velocity moment ``J_il = sum_j (v_j)_l f_ij dv^d`` (diagnostic)."""
    mesh = grid.v_mesh()
    axes = tuple(range(f.ndim - grid.d, f.ndim))
    cols = [(f * mesh[l]).sum(axis=axes) * grid.cell_measure_v for l in range(grid.d)]
    return np.stack(cols, axis=-1)


def second_moment(f: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Diagnostic second moment ``Q_i = sum_j |v_j|^2 f_ij dv^d``."""
    mesh = grid.v_mesh()
    v2 = sum(c**2 for c in mesh)
    axes = tuple(range(f.ndim - grid.d, f.ndim))
    return (f * v2).sum(axis=axes) * grid.cell_measure_v


@dataclass
class MomentSet:
    rho: np.ndarray
    J: np.ndarray
    Q: np.ndarray

    @classmethod
    def of(cls, f: np.ndarray, grid: PhaseGrid) -> "MomentSet":
        return cls(density(f, grid), current(f, grid), second_moment(f, grid))


@dataclass
class SolverConfig:
    """Parameters of the full scheme.

    ``eps`` may be a scalar or a per-spatial-cell array (mixing regime).
    ``algorithm`` selects the inner optimizer: ``"fixed"`` (constant prox
    step ``gamma``) or ``"linesearch"`` (backtracking with sufficient
    decrease parameter ``theta``).
    """

    eps: float | np.ndarray = 1.0
    tau: float = 0.05
    T: float = 0.1
    gamma: float = 0.5
    theta: float = 0.01
    delta: float = 1e-7
    n_max: int = 1000
    algorithm: str = "linesearch"
    mode: str = "vpfp"  # vpfp | vfp | homogeneous
    background: Callable[[np.ndarray], np.ndarray] | np.ndarray | None = None
    external_potential_grad: Callable[[np.ndarray], np.ndarray] | np.ndarray | None = None
    cfl_safety: float = 1.0
    positivity_floor: float = 1e-14
    linear_solver: str = "direct"  # direct | cg (cg only used for d == 3)
    workers: int = 1
    snapshot_every: int = 0  # 0: only first/last

    def __post_init__(self):
        if not 0.0 < self.theta < 0.5:
            raise ValueError("theta must be in (0, 1/2)")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if np.any(np.asarray(self.eps) <= 0):
            raise ValueError("eps must be positive pointwise")
        if self.algorithm not in ("fixed", "linesearch"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.mode not in ("vpfp", "vfp", "homogeneous"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def eps_at(self, n_x: int) -> np.ndarray:
        """Per-cell collision scale, broadcast if scalar."""
        e = np.asarray(self.eps, dtype=float)
        if e.ndim == 0:
            return np.full(n_x, float(e))
        if e.shape != (n_x,):
            raise ValueError(f"eps array has shape {e.shape}, expected ({n_x},)")
        return e

    def background_on(self, grid: PhaseGrid) -> np.ndarray:
        if self.background is None:
            raise ValueError("config has no background charge density h(x)")
        h = self.background(grid.x) if callable(self.background) else np.asarray(self.background, float)
        if h.shape != (grid.n_x,):
            raise ValueError(f"background has shape {h.shape}, expected ({grid.n_x},)")
        return h
