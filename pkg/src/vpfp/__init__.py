"""Asymptotic-preserving VPFP solver with a variational collision step."""

from .core import (
    MomentSet,
    PhaseGrid,
    SolverConfig,
    current,
    delinearize_index,
    density,
    linearize_index,
)
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "PhaseGrid",
    "SolverConfig",
    "MomentSet",
    "density",
    "current",
    "linearize_index",
    "delinearize_index",
    "KERNEL_BACKEND",
    "__version__",
]
