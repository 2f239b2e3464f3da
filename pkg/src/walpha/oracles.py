"""Independent reference values: the two interpolation endpoints and a tiny brute-force solve.

Nothing here reuses the solver kernels (no prox, no FFT projection, no
shared energy code), so agreement is meaningful evidence.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize_scalar

from .errors import ConfigurationError, InfeasibleMarginalsError, UnsupportedDimensionError
from .grid import MASS_TOL, TorusGrid


def _check_mass(rho0, rho1, grid):
    rho0 = np.asarray(rho0, dtype=float)
    rho1 = np.asarray(rho1, dtype=float)
    if rho0.shape != grid.space_shape or rho1.shape != grid.space_shape:
        raise ConfigurationError("marginal shapes do not match the grid")
    m0 = rho0.sum() * grid.cell_volume
    m1 = rho1.sum() * grid.cell_volume
    if abs(m0 - m1) > MASS_TOL:
        raise InfeasibleMarginalsError(f"marginal masses differ: {m0!r} vs {m1!r}")
    return rho0, rho1


def hminus1_distance(rho0, rho1, grid: TorusGrid) -> float:
    """Squared discrete ``H^-1`` norm of ``rho1 - rho0`` on the periodic grid.

    Sum over nonzero modes of ``|f_k|^2 / lambda_k`` with the symbol of the
    nearest-neighbour Laplacian; this is the minimal ``int int |w|^2`` under
    the discrete continuity equation (constant-in-time flux).
    """
    rho0, rho1 = _check_mass(rho0, rho1, grid)
    f = np.fft.fftn(rho1 - rho0)
    k = np.arange(grid.n)
    lam1 = 4.0 * np.sin(np.pi * k / grid.n) ** 2 * grid.n**2
    lam = sum(np.meshgrid(*([lam1] * grid.d), indexing="ij"))
    lam.flat[0] = np.inf
    N = grid.n**grid.d
    return float(np.sum(np.abs(f) ** 2 / lam) / N**2)


def _quantile(rho, h, u):
    """Inverse of the piecewise-linear CDF of a cell-wise constant density on ``[-1/2, 1/2)``,
    extended to all real ``u`` by ``Q(u + 1) = Q(u) + 1``."""
    mass = rho * h
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    cdf /= cdf[-1]
    edges = -0.5 + h * np.arange(rho.size + 1)
    shift = np.floor(u)
    frac = u - shift
    # strictly increasing CDF is guaranteed by positive densities; zero cells give flat parts
    return np.interp(frac, cdf, edges) + shift


def w2_periodic_1d(rho0, rho1, grid: TorusGrid) -> float:
    """Squared quadratic Wasserstein distance on the circle from shifted quantiles.

    For each shift the integral of the squared quantile difference is computed
    exactly: both quantile functions are linear between the merged CDF
    breakpoints, so Simpson's rule is exact on every piece.
    """
    if grid.d != 1:
        raise UnsupportedDimensionError("the quantile oracle is one-dimensional")
    rho0, rho1 = _check_mass(rho0, rho1, grid)
    c0 = np.cumsum(rho0) / rho0.sum()
    c1 = np.cumsum(rho1) / rho1.sum()

    def cost(theta):
        knots = np.unique(np.concatenate([[0.0, 1.0], c0, np.mod(c1 - theta, 1.0)]))
        a, b = knots[:-1], knots[1:]
        m = 0.5 * (a + b)
        diffs = [_quantile(rho0, grid.h, u) - _quantile(rho1, grid.h, u + theta) for u in (a, m, b)]
        # the lifted target may sit one period away; take the nearest copy of the whole map
        shift = np.round(np.sum((b - a) * (diffs[0] + 4 * diffs[1] + diffs[2])) / 6)
        fa, fm, fb = (dd - shift for dd in diffs)
        return float(np.sum((b - a) * (fa * fa + 4 * fm * fm + fb * fb)) / 6)

    thetas = np.linspace(-1.0, 1.0, 401)
    vals = [cost(t) for t in thetas]
    i = int(np.argmin(vals))
    res = minimize_scalar(cost, bracket=None, bounds=(thetas[max(i - 1, 0)], thetas[min(i + 1, 400)]),
                          method="bounded", options={"xatol": 1e-12})
    return float(min(res.fun, vals[i]))


class _TinyProblem:
    """Feasible set and energy of the staggered discrete problem, written out by index."""

    def __init__(self, rho0, rho1, alpha, grid: TorusGrid):
        if grid.d != 1:
            raise UnsupportedDimensionError("brute-force oracle is implemented for d = 1")
        self.n, self.nt = grid.n, grid.nt
        self.h, self.dt = grid.h, grid.dt
        self.alpha = float(alpha)
        self.rho0, self.rho1 = rho0, rho1
        n, nt = self.n, self.nt
        self.n_rho = (nt - 1) * n
        self.n_w = nt * n
        A = np.zeros((nt * n, self.n_rho + self.n_w))
        b = np.zeros(nt * n)
        for k in range(nt):
            for i in range(n):
                row = k * n + i
                # (rho[k+1,i] - rho[k,i]) / dt + (w[k,i] - w[k,i-1]) / h = 0
                for kk, sgn in ((k + 1, 1.0), (k, -1.0)):
                    if kk == 0:
                        b[row] -= sgn * rho0[i] / self.dt
                    elif kk == nt:
                        b[row] -= sgn * rho1[i] / self.dt
                    else:
                        A[row, (kk - 1) * n + i] += sgn / self.dt
                A[row, self.n_rho + k * n + i] += 1.0 / self.h
                A[row, self.n_rho + k * n + (i - 1) % n] -= 1.0 / self.h
        self.A, self.b = A, b
        self.x0 = np.linalg.lstsq(A, b, rcond=None)[0]

    def unpack(self, x):
        n, nt = self.n, self.nt
        rho = np.empty((nt + 1, n))
        rho[0], rho[-1] = self.rho0, self.rho1
        rho[1:-1] = x[: self.n_rho].reshape(nt - 1, n)
        return rho, x[self.n_rho:].reshape(nt, n)

    def energy_grad(self, x):
        n, nt, a = self.n, self.nt, self.alpha
        rho, w = self.unpack(x)
        g_rho = np.zeros_like(rho)
        g_w = np.zeros_like(w)
        E = 0.0
        c = self.dt * self.h
        for k in range(nt):
            for i in range(n):
                j = (i + 1) % n
                ri = 0.5 * (rho[k, i] + rho[k + 1, i])
                rj = 0.5 * (rho[k, j] + rho[k + 1, j])
                if ri < 0 or rj < 0:
                    return np.inf, None
                if a == 0.0:
                    m, dmi, dmj = 1.0, 0.0, 0.0
                else:
                    m = 0.5 * (ri**a + rj**a)
                    dmi = 0.5 * a * ri ** (a - 1) if ri > 0 else np.inf
                    dmj = 0.5 * a * rj ** (a - 1) if rj > 0 else np.inf
                if m <= 0:
                    if w[k, i] != 0:
                        return np.inf, None
                    continue
                E += c * w[k, i] ** 2 / m
                g_w[k, i] += 2 * c * w[k, i] / m
                t = -c * w[k, i] ** 2 / m**2
                for cell, dm in ((i, dmi), (j, dmj)):
                    if t != 0:
                        g_rho[k, cell] += 0.5 * t * dm
                        g_rho[k + 1, cell] += 0.5 * t * dm
        grad = np.concatenate([g_rho[1:-1].ravel(), g_w.ravel()])
        return E, grad


def brute_force_tiny(rho0, rho1, alpha, grid: TorusGrid, basis_rotation=None,
                     max_iter: int = 1_000_000, tol: float = 1e-10) -> float:
    """Minimal discrete kinetic energy on a tiny grid by descent in a kernel basis.

    The feasible set is ``x0 + N z`` with ``N`` an orthonormal basis of the
    kernel of the continuity operator; ``basis_rotation`` (an orthogonal
    matrix or an integer seed) replaces ``N`` by ``N Q`` to test basis
    independence.
    """
    rho0, rho1 = _check_mass(rho0, rho1, grid)
    if grid.n > 4 or grid.nt > 2:
        raise ConfigurationError("brute_force_tiny is limited to n <= 4 and nt <= 2")
    if np.allclose(rho0, rho1, rtol=0, atol=1e-15):
        return 0.0
    P = _TinyProblem(rho0, rho1, alpha, grid)
    N = null_space(P.A)
    if basis_rotation is not None:
        if np.isscalar(basis_rotation):
            rng = np.random.default_rng(int(basis_rotation))
            Q, _ = np.linalg.qr(rng.standard_normal((N.shape[1], N.shape[1])))
        else:
            Q = np.asarray(basis_rotation)
        N = N @ Q
    # start from the straight interpolation with its least-squares flux
    t = np.linspace(0, 1, grid.nt + 1)[:, None]
    rho_lin = (1 - t) * rho0 + t * rho1
    x_lin = np.concatenate([rho_lin[1:-1].ravel(), np.zeros(P.n_w)])
    z = N.T @ (x_lin - P.x0)
    # the part of x_lin off the kernel is discarded; x0 carries the affine offset
    x = P.x0 + N @ z
    E, g = P.energy_grad(x)
    gz = N.T @ g
    step = 1e-2
    z_prev = g_prev = None
    stalled = 0
    for it in range(max_iter):
        if np.linalg.norm(gz) <= tol or stalled >= 50:
            break
        if z_prev is not None:
            s, y = z - z_prev, gz - g_prev
            sy = float(s @ y)
            if sy > 0:
                step = float(s @ s) / sy
        # damped Armijo backtracking keeps iterates inside the domain
        while True:
            z_new = z - step * gz
            E_new, g_new = P.energy_grad(P.x0 + N @ z_new)
            if np.isfinite(E_new) and E_new <= E - 1e-4 * step * float(gz @ gz):
                break
            step *= 0.5
            if step < 1e-20:
                return float(E)
        # once the energy stops moving at machine precision the gradient is roundoff
        stalled = stalled + 1 if E - E_new <= 1e-15 * abs(E) else 0
        z_prev, g_prev = z, gz
        z, E, gz = z_new, E_new, N.T @ g_new
    return float(E)
