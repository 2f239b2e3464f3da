"""Periodic space-time grid, staggered operators and the continuity projection.

Layout (row-major, time first):

* densities ``rho``: ``(nt + 1, n, ..., n)`` at integer times and cell centres;
* fluxes ``w``: ``(d, nt, n, ..., n)``; ``w[a, k, i]`` sits on the face between
  cell ``i`` and ``i + e_a`` at half time ``k + 1/2``;
* potentials ``phi``: ``(nt + 1, n, ..., n)`` like densities.

Cell ``i`` along an axis has centre ``-1/2 + (i + 1/2) h`` so the grid tiles
the unit cell ``[-1/2, 1/2)^d``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import ConfigurationError, InfeasibleMarginalsError

MASS_TOL = 1e-9


@dataclass(frozen=True)
class TorusGrid:
    d: int
    n: int
    nt: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError(f"d must be 1 or 2, got {self.d}")
        if self.n < 4:
            raise ConfigurationError(f"n must be >= 4, got {self.n}")
        if self.nt < 2:
            raise ConfigurationError(f"nt must be >= 2, got {self.nt}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def dt(self) -> float:
        return 1.0 / self.nt

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def space_shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def density_shape(self) -> tuple:
        return (self.nt + 1,) + self.space_shape

    @property
    def flux_shape(self) -> tuple:
        return (self.d, self.nt) + self.space_shape

    @property
    def spatial_axes(self) -> tuple:
        """Axes of the trailing spatial block, counted from the end."""
        return tuple(range(-self.d, 0))

    def centers(self) -> np.ndarray:
        """Cell centre coordinates, shape ``(d, n, ..., n)``."""
        x = -0.5 + (np.arange(self.n) + 0.5) * self.h
        return np.stack(np.meshgrid(*([x] * self.d), indexing="ij"))

    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nt + 1)

    def integrate(self, f: np.ndarray) -> np.ndarray:
        """Spatial integral of the trailing ``d`` axes."""
        return f.sum(axis=self.spatial_axes) * self.cell_volume


def _check_space(arr: np.ndarray, grid: TorusGrid, what: str):
    if arr.ndim < grid.d or arr.shape[-grid.d:] != grid.space_shape:
        raise ConfigurationError(
            f"{what}: trailing shape {arr.shape} does not match grid {grid.space_shape}"
        )


def discrete_gradient(phi: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Forward differences across every face, periodic.

    Accepts any leading batch axes; returns ``(d, *phi.shape)``.
    """
    phi = np.asarray(phi, dtype=float)
    _check_space(phi, grid, "discrete_gradient")
    axes = grid.spatial_axes
    return np.stack([(np.roll(phi, -1, axis=ax) - phi) / grid.h for ax in axes])


def discrete_divergence(w: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Backward differences of face values; the negative adjoint of the gradient."""
    w = np.asarray(w, dtype=float)
    if w.shape[0] != grid.d:
        raise ConfigurationError(f"flux leading axis must be d={grid.d}, got {w.shape}")
    _check_space(w, grid, "discrete_divergence")
    out = np.zeros(w.shape[1:])
    for a, ax in enumerate(grid.spatial_axes):
        out += (w[a] - np.roll(w[a], 1, axis=ax)) / grid.h
    return out


def interp_staggered_to_centered(w: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Average the two faces bounding each cell along each axis."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    for a, ax in enumerate(grid.spatial_axes):
        out[a] = 0.5 * (np.roll(w[a], 1, axis=ax) + w[a])
    return out


def interp_centered_to_staggered_adjoint(v: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Adjoint of :func:`interp_staggered_to_centered` in the Euclidean product."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    for a, ax in enumerate(grid.spatial_axes):
        out[a] = 0.5 * (v[a] + np.roll(v[a], -1, axis=ax))
    return out


def laplacian_symbol(grid: TorusGrid) -> np.ndarray:
    """Eigenvalues of ``-div grad`` on the FFT modes (``>= 0``)."""
    k = np.arange(grid.n)
    lam1 = 4.0 * np.sin(np.pi * k / grid.n) ** 2 / grid.h**2
    lam = np.zeros(grid.space_shape)
    for a in range(grid.d):
        shape = [1] * grid.d
        shape[a] = grid.n
        lam = lam + lam1.reshape(shape)
    return lam


def check_marginals(rho0: np.ndarray, rho1: np.ndarray, grid: TorusGrid):
    rho0 = np.asarray(rho0, dtype=float)
    rho1 = np.asarray(rho1, dtype=float)
    for name, r in (("rho0", rho0), ("rho1", rho1)):
        if r.shape != grid.space_shape:
            raise ConfigurationError(f"{name} has shape {r.shape}, expected {grid.space_shape}")
        if not np.all(np.isfinite(r)):
            raise ConfigurationError(f"{name} is not finite")
    m0, m1 = grid.integrate(rho0), grid.integrate(rho1)
    if abs(m0 - m1) > MASS_TOL:
        raise InfeasibleMarginalsError(f"marginal masses differ: {m0!r} vs {m1!r}")
    return rho0, rho1


def with_endpoints(rho: np.ndarray, rho0: np.ndarray, rho1: np.ndarray) -> np.ndarray:
    out = np.array(rho, dtype=float, copy=True)
    out[0] = rho0
    out[-1] = rho1
    return out


def continuity_residual(rho: np.ndarray, w: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """``(rho[k+1] - rho[k]) / dt + div w[k]`` for every half time step."""
    return np.diff(rho, axis=0) / grid.dt + discrete_divergence(w, grid)


class ContinuityProjector:
    """Euclidean projection onto the discrete continuity constraint.

    The unknowns are the interior density slices and all face fluxes.  The
    normal equations ``A A^T mu = A x - b`` couple time through a Neumann
    second difference (diagonalised by a type-II DCT) and space through the
    periodic Laplacian (diagonalised by the FFT).
    """

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        m = np.arange(grid.nt)
        sig_t = 4.0 * np.sin(np.pi * m / (2 * grid.nt)) ** 2 / grid.dt**2
        sig = sig_t.reshape((-1,) + (1,) * grid.d) + laplacian_symbol(grid)[None]
        sig[(0,) * (grid.d + 1)] = np.inf
        self._inv_symbol = 1.0 / sig

    def solve_normal(self, r: np.ndarray) -> np.ndarray:
        g = self.grid
        rh = scipy.fft.dct(r, type=2, axis=0, norm="ortho")
        rh = np.fft.fftn(rh, axes=g.spatial_axes)
        mu = np.fft.ifftn(rh * self._inv_symbol, axes=g.spatial_axes).real
        return scipy.fft.idct(mu, type=2, axis=0, norm="ortho")

    def __call__(self, rho, w, rho0, rho1):
        g = self.grid
        rho = with_endpoints(rho, rho0, rho1)
        w = np.asarray(w, dtype=float)
        if rho.shape != g.density_shape or w.shape != g.flux_shape:
            raise ConfigurationError(
                f"shapes {rho.shape}, {w.shape} do not match grid "
                f"{g.density_shape}, {g.flux_shape}"
            )
        mu = self.solve_normal(continuity_residual(rho, w, g))
        rho_new = rho.copy()
        rho_new[1:-1] -= (mu[:-1] - mu[1:]) / g.dt
        w_new = w + discrete_gradient(mu, g)
        return rho_new, w_new, mu


def project_continuity(rho, w, rho0, rho1, grid: TorusGrid):
    """Project ``(rho, w)`` onto ``{d_t rho + div w = 0, rho(0)=rho0, rho(1)=rho1}``.

    Returns the projected pair and the Lagrange multiplier of the constraint,
    one slice per half time step (shape ``(nt, n, ..., n)``).
    """
    rho0, rho1 = check_marginals(rho0, rho1, grid)
    return ContinuityProjector(grid)(rho, w, rho0, rho1)
