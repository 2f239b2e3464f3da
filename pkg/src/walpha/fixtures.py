"""Canonical test densities: periodic Gaussian bumps on a positive floor."""
from __future__ import annotations

import numpy as np

from .grid import TorusGrid


def periodic_gaussian(grid: TorusGrid, center, width: float) -> np.ndarray:
    x = grid.centers()
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
    r2 = np.zeros(grid.space_shape)
    for a in range(grid.d):
        dx = x[a] - center[a]
        dx = dx - np.round(dx)
        r2 += dx * dx
    return np.exp(-0.5 * r2 / width**2)


def normalise(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return f / grid.integrate(f)


def bump(grid: TorusGrid, center, width=0.08, floor=0.5, height=1.0) -> np.ndarray:
    """Unit-mass density ``floor + height * gaussian`` (bounded below by a positive constant)."""
    return normalise(floor + height * periodic_gaussian(grid, center, width), grid)


# (center0, center1, width, floor) of the three canonical 1D pairs
BUMP_PAIRS = (
    (-0.2, 0.15, 0.08, 0.5),
    (-0.25, 0.25, 0.07, 0.3),
    (0.0, 0.3, 0.10, 0.8),
)


def bump_pair(grid: TorusGrid, which: int = 0):
    c0, c1, width, floor = BUMP_PAIRS[which]
    if grid.d == 2:
        c0, c1 = (c0, -0.5 * c0), (c1, 0.5 * c1)
    return bump(grid, c0, width, floor), bump(grid, c1, width, floor)


def random_density(grid: TorusGrid, rng, modes: int = 3, floor: float = 0.3) -> np.ndarray:
    """Smooth random positive density built from a few low Fourier modes."""
    rng = np.random.default_rng(rng)
    x = grid.centers()
    f = np.ones(grid.space_shape)
    for _ in range(modes):
        k = rng.integers(1, 4, size=grid.d)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.1, 0.5)
        f = f + amp * np.cos(2 * np.pi * np.tensordot(k, x, axes=1) + phase)
    f = np.maximum(f, floor)
    return normalise(f, grid)
