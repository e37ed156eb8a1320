"""Spectral Poisson solve on the periodic spatial grid.

Solves ``-phi'' = rho - h`` with the zero-mean gauge and returns both the
potential and its spectral derivative. The mean of the source is projected
out before solving (global neutrality holds only up to quadrature error for
tabulated backgrounds), and the size of that projection is reported through
the module logger.
"""

from __future__ import annotations

import logging

import numpy as np

from .core import PhaseGrid

logger = logging.getLogger(__name__)


def solve_poisson(rho: np.ndarray, h: np.ndarray, grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(phi, dphi/dx)`` on the spatial nodes.

    Fourier modes: ``phi_hat_k = s_hat_k / k^2`` for ``k != 0`` with
    ``k = 2*pi*m / (2*L_x)``, ``phi_hat_0 = 0``. For even ``N_x`` the Nyquist
    mode of the derivative is zeroed (it carries no sign information).
    """
    source = np.asarray(rho, dtype=float) - np.asarray(h, dtype=float)
    n = grid.n_x
    if source.shape != (n,):
        raise ValueError(f"source has shape {source.shape}, expected ({n},)")

    mean = source.mean()
    if abs(mean) > 0:
        logger.debug("poisson: projecting out source mean %.3e", mean)
    s_hat = np.fft.rfft(source - mean)

    length = grid.x_max - grid.x_min
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=length / n)
    phi_hat = np.zeros_like(s_hat)
    phi_hat[1:] = s_hat[1:] / k[1:] ** 2

    dphi_hat = 1j * k * phi_hat
    if n % 2 == 0:
        dphi_hat[-1] = 0.0

    phi = np.fft.irfft(phi_hat, n=n)
    dphi = np.fft.irfft(dphi_hat, n=n)
    return phi, dphi
