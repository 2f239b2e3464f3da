"""Discrete primal and dual functionals shared by the solver and the certificates.

The kinetic energy of a feasible pair charges each face flux against the
arithmetic mean of the mobilities ``rho^alpha`` of the two adjacent cells,
with densities averaged over the two endpoints of each time step.  Its exact
convex dual evaluates ``L`` at cell centres and half times, pairing the time
difference of ``phi`` with the face-averaged squared (time-averaged) gradient.
With these two choices weak duality holds for every feasible pair and every
potential, and the duality gap closes at the discrete optimum.
"""
from __future__ import annotations

import numpy as np

from .energy import L_sq
from .grid import TorusGrid, discrete_gradient


def time_average(f: np.ndarray) -> np.ndarray:
    return 0.5 * (f[:-1] + f[1:])


def mobility(rho: np.ndarray, alpha: float) -> np.ndarray:
    if alpha == 0.0:
        return np.where(rho >= 0, 1.0, np.nan)
    with np.errstate(invalid="ignore"):
        return np.where(rho >= 0, np.abs(rho) ** alpha, np.nan)


def face_mobility(rho_half: np.ndarray, alpha: float, grid: TorusGrid) -> np.ndarray:
    """Mean of the cell mobilities on each side of every face, ``(d, *rho_half.shape)``."""
    m = mobility(rho_half, alpha)
    return np.stack([0.5 * (m + np.roll(m, -1, axis=ax)) for ax in grid.spatial_axes])


def face_energy_density(rho, w, alpha, grid) -> np.ndarray:
    """``w^2 / mbar`` on every face and half step; ``+inf`` where infeasible."""
    mbar = face_mobility(time_average(rho), alpha, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(mbar > 0, w * w / mbar, np.where(w == 0, 0.0, np.inf))
    return np.where(np.isnan(mbar), np.inf, e)


def energy_per_time(rho, w, alpha, grid: TorusGrid) -> np.ndarray:
    """Spatial integral of the kinetic energy on each time step."""
    e = face_energy_density(rho, w, alpha, grid)
    return e.sum(axis=(0,) + tuple(range(2, e.ndim))) * grid.cell_volume


def kinetic_energy(rho, w, alpha, grid: TorusGrid) -> float:
    return float(energy_per_time(rho, w, alpha, grid).sum() * grid.dt)


def cell_energy_density(rho, w, alpha, grid) -> np.ndarray:
    """Kinetic energy density at cell centres and half times (faces split evenly)."""
    e = face_energy_density(rho, w, alpha, grid)
    out = np.zeros(e.shape[1:])
    for a, ax in enumerate(grid.spatial_axes):
        out += 0.5 * (e[a] + np.roll(e[a], 1, axis=ax))
    return out


def averaged_gradient(phi, grid) -> np.ndarray:
    """Spatial gradient on faces, averaged over the two ends of each time step."""
    return time_average(discrete_gradient(phi, grid).swapaxes(0, 1)).swapaxes(0, 1)


def cell_gradient_sq(phi, grid) -> np.ndarray:
    """Face average of the squared time-averaged gradient, at cells and half times."""
    g = averaged_gradient(phi, grid)
    out = np.zeros(g.shape[1:])
    for a, ax in enumerate(grid.spatial_axes):
        out += 0.5 * (g[a] ** 2 + np.roll(g[a], 1, axis=ax) ** 2)
    return out


def time_derivative(phi, grid) -> np.ndarray:
    return np.diff(phi, axis=0) / grid.dt


def dual_integrand(phi, alpha, grid) -> np.ndarray:
    """``L(d_t phi, grad phi)`` at cells and half times."""
    return L_sq(time_derivative(phi, grid), cell_gradient_sq(phi, grid), alpha)


def boundary_term(phi, rho0, rho1, grid) -> float:
    """``int phi(0) rho0 - int phi(1) rho1``."""
    return float(grid.integrate(phi[0] * rho0) - grid.integrate(phi[-1] * rho1))


def dual_objective(phi, rho0, rho1, alpha, grid) -> float:
    """Discrete ``J(phi)``; ``+inf`` propagates from the integrand."""
    lag = dual_integrand(phi, alpha, grid)
    bulk = float(lag.sum() * grid.dt * grid.cell_volume)
    return bulk + boundary_term(phi, rho0, rho1, grid)
