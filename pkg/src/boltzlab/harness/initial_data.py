"""Synthetic initial data with prescribed low-frequency Besov regularity.

The spectral amplitude A(|k|) is chosen so that the shell quantities
2^{q sigma0} ||Delta_q f0|| are constant across low shells: with n(k) ~ k^{d-1}
modes per magnitude, that requires A(k) proportional to k^{-(sigma0 + d/2)}.
Velocity content is a fixed mixed macroscopic + microscopic profile; phases
are drawn from the seeded generator and the field is Hermitian by
construction.
"""
from __future__ import annotations

import numpy as np

from ..littlewood_paley import SpatialLattice
from ..velocity import VelocityGrid, sqrt_maxwellian
from ..velocity import norm as vnorm


def velocity_profile(grid: VelocityGrid, which: str = "mixed") -> np.ndarray:
    smu = sqrt_maxwellian(grid)
    if which == "zero":
        return np.zeros(grid.n_nodes)
    xi = grid.xi
    r2 = np.sum(xi ** 2, axis=1)
    if which == "mixed":
        prof = smu + xi[:, 0] * smu + (r2 - 3.0) * smu + xi[:, 0] * xi[:, 1] * smu
    elif which == "macro":
        prof = smu + xi[:, 0] * smu + (r2 - 3.0) * smu
    elif which == "micro":
        prof = xi[:, 0] * xi[:, 1] * smu
    else:
        raise ValueError(f"unknown velocity profile {which!r}")
    return prof / vnorm(grid, prof)


def synthesize_initial_data(lattice: SpatialLattice, grid: VelocityGrid,
                            sigma0: float, profile: str = "mixed",
                            seed: int = 0, amplitude: float = 1.0
                            ) -> np.ndarray:
    """f0_hat(k, xi) = A(|k|) e^{i theta_k} g(xi), Hermitian, empty Nyquist.

    A is normalized so the largest spectral amplitude is ``amplitude``.
    """
    g = velocity_profile(grid, profile)
    if not np.any(g):
        return np.zeros(lattice.k_shape + (grid.n_nodes,), dtype=complex)
    rng = np.random.default_rng(seed)
    kmag = lattice.k_mag
    amp = np.zeros_like(kmag)
    nz = kmag > 0
    amp[nz] = kmag[nz] ** (-(sigma0 + lattice.dim / 2.0))
    amp[lattice.nyquist_mask] = 0.0
    if amp.max() > 0:
        amp *= amplitude / amp.max()
    phases = np.exp(2j * np.pi * rng.random(kmag.shape))
    field = (amp * phases)[..., None] * g
    return lattice.hermitize(field)
