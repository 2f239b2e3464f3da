import functools

import numpy as np
import pytest
from hypothesis import settings

from walpha.fixtures import bump_pair
from walpha.grid import TorusGrid
from walpha.solver import SolveConfig, solve_geodesic

settings.register_profile("walpha", max_examples=25, deadline=None, database=None)
settings.load_profile("walpha")


@functools.lru_cache(maxsize=None)
def cached_solve(alpha, which=0, d=1, n=64, nt=32, tol_gap=1e-5):
    """Converged geodesic on a canonical bump pair, shared across test modules."""
    grid = TorusGrid(d, n, nt)
    rho0, rho1 = bump_pair(grid, which)
    rho, w, phi, rep = solve_geodesic(rho0, rho1, alpha, grid, SolveConfig(tol_gap=tol_gap))
    return grid, rho0, rho1, rho, w, phi, rep


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def solved_08():
    return cached_solve(0.8)


def interpolation_path(rho0, rho1, grid, schedule=lambda t: t):
    """Feasible pair ``rho0 + s(t) (rho1 - rho0)`` with the matching gradient flux.

    The flux is ``(s_{k+1} - s_k)/dt * grad u`` with ``lap u = rho0 - rho1``,
    which satisfies the discrete continuity equation exactly.
    """
    from walpha.grid import discrete_gradient
    from walpha.solver import poisson_periodic

    t = grid.times()
    s = schedule(t)
    shape = (-1,) + (1,) * grid.d
    rho = rho0 + s.reshape(shape) * (rho1 - rho0)
    grad_u = discrete_gradient(poisson_periodic(rho0 - rho1, grid), grid)
    rate = (np.diff(s) / grid.dt).reshape((1, -1) + (1,) * grid.d)
    w = rate * grad_u[:, None]
    return rho, w


@functools.lru_cache(maxsize=None)
def cached_uniform_to_bump(alpha=0.8, n=64, nt=32):
    from walpha.fixtures import bump, normalise

    grid = TorusGrid(1, n, nt)
    rho0 = np.ones(grid.space_shape)
    rho1 = normalise(bump(grid, 0.1, width=0.08, floor=0.3), grid)
    rho, w, phi, rep = solve_geodesic(rho0, rho1, alpha, grid, SolveConfig(tol_gap=1e-5))
    return grid, rho0, rho1, rho, w, phi, rep


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
