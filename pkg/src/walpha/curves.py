"""Lagrangian formulation: weighted ensembles of piecewise-linear periodic curves.

An ensemble ``eta`` of ``N`` curves with ``M`` linear segments induces the
space-time action density ``sigma_eta`` (each curve deposits
``weight * |velocity|^(2/(2-alpha))`` along its trajectory) and the energy
``K(eta) = int int sigma_eta^(2-alpha)``.  Minimising ``K`` over ensembles
with the prescribed endpoint distributions gives the squared distance.

Positions are stored lifted to ``R^d`` (no wrapping), so velocities are
plain differences of consecutive nodes; all deposits and evaluations reduce
positions modulo the unit torus.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize, minimize_scalar

from .energy import check_alpha
from .errors import ConfigurationError, NumericalError
from .functional import cell_energy_density
from .grid import TorusGrid, check_marginals

log = logging.getLogger(__name__)


@dataclass
class CurveEnsemble:
    positions: np.ndarray  # (N, M + 1, d), lifted coordinates
    weights: np.ndarray  # (N,)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.positions.ndim != 3:
            raise ConfigurationError("positions must have shape (N, M + 1, d)")
        if self.weights.shape != (self.positions.shape[0],):
            raise ConfigurationError("one weight per curve required")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ConfigurationError("weights must be positive and sum to 1")
        if not np.all(np.isfinite(self.positions)):
            raise ConfigurationError("positions must be finite")

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def M(self) -> int:
        return self.positions.shape[1] - 1

    @property
    def d(self) -> int:
        return self.positions.shape[2]

    def velocities(self) -> np.ndarray:
        return np.diff(self.positions, axis=1) * self.M

    def endpoint(self, which: int) -> np.ndarray:
        return self.positions[:, 0 if which == 0 else -1]

    def action(self, alpha) -> np.ndarray:
        """Per-curve ``int |gamma'|^(2/(2-alpha)) dt``."""
        p = 2 / (2 - alpha)
        sp = np.linalg.norm(self.velocities(), axis=2)
        return (sp**p).sum(axis=1) / self.M

    def to_csv(self) -> str:
        lines = ["particle_id,time_index," + ",".join(f"x{a}" for a in range(self.d)) + ",weight"]
        for i in range(self.N):
            for m in range(self.M + 1):
                xs = ",".join(f"{v:.17g}" for v in self.positions[i, m])
                lines.append(f"{i},{m},{xs},{self.weights[i]:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "CurveEnsemble":
        rows = [r for r in text.strip().splitlines()[1:] if r.strip()]
        data = np.array([[float(v) for v in r.split(",")] for r in rows])
        ids = data[:, 0].astype(int)
        tix = data[:, 1].astype(int)
        N, M1 = ids.max() + 1, tix.max() + 1
        d = data.shape[1] - 3
        pos = np.empty((N, M1, d))
        pos[ids, tix] = data[:, 2:2 + d]
        w = np.empty(N)
        w[ids] = data[:, -1]
        return cls(pos, w)


@dataclass
class CurveConfig:
    N: int = 2000
    M: int = 16
    sub_per_step: int = 2
    bandwidth_cells: float = 2.0
    lambdas: tuple = (1e2, 1e3, 1e4)
    tol_marginal: float = 2e-2
    max_iter: int = 400
    seed: int = 0
    fd_gradient: bool = False

    def __post_init__(self):
        if self.N < 1 or self.M < 1:
            raise ConfigurationError("N and M must be positive")
        if self.sub_per_step < 1:
            raise ConfigurationError("sub_per_step must be >= 1")


class Deposition:
    """Sub-sampled cloud-in-cell deposition of curve action onto the ``(nt, n^d)`` cells.

    Time is cut into ``S`` equal pieces, a common refinement of the grid steps
    and the curve segments; each piece deposits its exact action at the
    midpoint position of the piece, split multilinearly among cell centres.
    """

    def __init__(self, grid: TorusGrid, M: int, sub_per_step: int = 2):
        self.grid, self.M = grid, M
        S = math.lcm(grid.nt, M) * sub_per_step
        self.S = S
        tau = (np.arange(S) + 0.5) / S
        self.seg = np.floor(tau * M).astype(int)
        self.theta = tau * M - self.seg
        self.tcell = np.floor(tau * grid.nt).astype(int)
        self.dtau = 1.0 / S
        self.corners = [np.array(c) for c in itertools.product((0, 1), repeat=grid.d)]

    def _points(self, pos):
        x0 = pos[:, self.seg]
        x1 = pos[:, self.seg + 1]
        th = self.theta[None, :, None]
        return (1 - th) * x0 + th * x1  # (N, S, d)

    def _cic(self, x):
        g = self.grid
        u = (x + 0.5) / g.h - 0.5
        i0 = np.floor(u).astype(int)
        fr = u - i0
        return i0, fr

    def _flat(self, idx):
        g = self.grid
        idx = idx % g.n
        flat = np.zeros(idx.shape[:-1], dtype=int)
        for a in range(g.d):
            flat = flat * g.n + idx[..., a]
        return flat

    def rates(self, pos, alpha):
        vel = np.diff(pos, axis=1) * self.M  # (N, M, d)
        sp = np.linalg.norm(vel, axis=2)
        return vel, sp, sp ** (2 / (2 - alpha))

    def sigma(self, pos, weights, alpha):
        g = self.grid
        _, _, rate = self.rates(pos, alpha)
        amount = weights[:, None] * rate[:, self.seg] * self.dtau / (g.cell_volume * g.dt)
        x = self._points(pos)
        i0, fr = self._cic(x)
        out = np.zeros(g.nt * g.n**g.d)
        tbase = self.tcell[None, :] * g.n**g.d
        for c in self.corners:
            wgt = np.prod(np.where(c == 1, fr, 1 - fr), axis=2)
            flat = tbase + self._flat(i0 + c)
            out += np.bincount(flat.ravel(), (amount * wgt).ravel(), minlength=out.size)
        return out.reshape((g.nt,) + g.space_shape)

    def pullback(self, pos, weights, alpha, G):
        """Gradient of ``sum_cells G * sigma * h^d dt`` with respect to all nodes."""
        g = self.grid
        p = 2 / (2 - alpha)
        vel, sp, rate = self.rates(pos, alpha)
        x = self._points(pos)
        i0, fr = self._cic(x)
        Gf = G.reshape(g.nt, -1)
        val = np.zeros(x.shape[:2])
        dval = np.zeros(x.shape)
        for c in self.corners:
            w_all = np.where(c == 1, fr, 1 - fr)
            wgt = np.prod(w_all, axis=2)
            Gc = Gf[self.tcell[None, :], self._flat(i0 + c)]
            val += wgt * Gc
            for a in range(g.d):
                others = np.prod(np.delete(w_all, a, axis=2), axis=2) if g.d > 1 else 1.0
                sgn = 1.0 if c[a] == 1 else -1.0
                dval[..., a] += sgn * others * Gc / g.h
        wdt = weights[:, None] * self.dtau
        # d/dx through the deposit location
        gx = (wdt * rate[:, self.seg])[..., None] * dval
        # d/dv through the action rate
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(sp > 0, p * sp ** (p - 2), 0.0)
        gv_sub = (wdt * val)[..., None] * (coef[:, self.seg][..., None] * vel[:, self.seg])
        grad = np.zeros_like(pos)
        th = self.theta[None, :, None]
        np.add.at(grad, (slice(None), self.seg), gx * (1 - th) - gv_sub * self.M)
        np.add.at(grad, (slice(None), self.seg + 1), gx * th + gv_sub * self.M)
        return grad


def sigma_eta(eta: CurveEnsemble, grid: TorusGrid, alpha, sub_per_step: int = 2) -> np.ndarray:
    """Density of the action measure on the space-time cells, shape ``(nt, *space)``."""
    alpha = check_alpha(alpha)
    return Deposition(grid, eta.M, sub_per_step).sigma(eta.positions, eta.weights, alpha)


def K_from_sigma(sigma, grid, alpha) -> float:
    return float(np.sum(sigma ** (2 - alpha)) * grid.cell_volume * grid.dt)


def K_eval(eta: CurveEnsemble, grid: TorusGrid, alpha, sub_per_step: int = 2) -> float:
    alpha = check_alpha(alpha)
    return K_from_sigma(sigma_eta(eta, grid, alpha, sub_per_step), grid, alpha)


def total_action(eta: CurveEnsemble, alpha) -> float:
    return float(np.sum(eta.weights * eta.action(alpha)))


class EndpointPenalty:
    """Squared mismatch of Gaussian-smoothed endpoint distributions against targets."""

    def __init__(self, grid: TorusGrid, rho0, rho1, bandwidth_cells=2.0):
        self.grid = grid
        self.bw = bandwidth_cells * grid.h
        self.centers = grid.centers().reshape(grid.d, -1).T  # (C, d)
        self.norm = (2 * np.pi * self.bw**2) ** (-grid.d / 2)
        self.targets = [self._smooth_density(r) for r in (rho0, rho1)]

    def _kernel(self, diff):
        diff = diff - np.round(diff)
        r2 = np.sum(diff * diff, axis=-1)
        return self.norm * np.exp(-0.5 * r2 / self.bw**2), diff

    def _smooth_density(self, rho):
        diff = self.centers[:, None, :] - self.centers[None, :, :]
        k, _ = self._kernel(diff)
        return k @ (rho.ravel() * self.grid.cell_volume)

    def smoothed(self, x, w):
        k, _ = self._kernel(self.centers[None, :, :] - x[:, None, :])
        return w @ k

    def value_grad(self, x, w, which):
        k, diff = self._kernel(self.centers[None, :, :] - x[:, None, :])  # (N, C)
        r = w @ k - self.targets[which]
        hv = self.grid.cell_volume
        val = hv * float(r @ r)
        # d k / d x = k * diff / bw^2
        gk = k * (r[None, :] * 2 * hv)
        grad = w[:, None] * np.einsum("nc,ncd->nd", gk, diff) / self.bw**2
        return val, grad

    def mismatch(self, x, w, which) -> float:
        """L1 distance between smoothed empirical and smoothed target densities."""
        r = self.smoothed(x, w) - self.targets[which]
        return float(np.abs(r).sum() * self.grid.cell_volume)


def _quantiles_1d(rho, grid, u):
    cdf = np.concatenate([[0.0], np.cumsum(rho * grid.h)])
    cdf /= cdf[-1]
    edges = -0.5 + grid.h * np.arange(grid.n + 1)
    sh = np.floor(u)
    return np.interp(u - sh, cdf, edges) + sh


def initial_ensemble(rho0, rho1, grid: TorusGrid, N: int, M: int, seed: int = 0) -> CurveEnsemble:
    """Endpoints by stratified inverse CDF (d=1) or seeded rejection sampling (d=2), joined by straight lines.

    In one dimension the two quantile sequences are matched monotonically with
    the cyclic shift that minimises the squared displacement; in two
    dimensions endpoints are paired by an assignment on torus distances.
    """
    rng = np.random.default_rng(seed)
    if grid.d == 1:
        u = (np.arange(N) + 0.5) / N
        x0 = _quantiles_1d(rho0, grid, u)

        def cost(theta):
            x1 = _quantiles_1d(rho1, grid, u + theta)
            dd = x1 - x0
            return float(np.mean((dd - np.round(dd.mean())) ** 2))

        if np.array_equal(rho0, rho1):
            theta = 0.0  # identical laws: every curve stays put
        else:
            thetas = np.linspace(-1, 1, 801)
            i = int(np.argmin([cost(t) for t in thetas]))
            theta = minimize_scalar(cost, bounds=(thetas[max(i - 1, 0)], thetas[min(i + 1, 800)]),
                                    method="bounded").x
        x1 = _quantiles_1d(rho1, grid, u + theta)
        x1 -= np.round((x1 - x0).mean())
        X0, X1 = x0[:, None], x1[:, None]
    else:
        X0 = _rejection(rho0, grid, N, rng)
        X1 = _rejection(rho1, grid, N, rng)
        diff = X1[None, :, :] - X0[:, None, :]
        diff -= np.round(diff)
        _, col = linear_sum_assignment(np.sum(diff * diff, axis=2))
        dd = X1[col] - X0
        X1 = X0 + dd - np.round(dd)
    s = np.linspace(0, 1, M + 1)[None, :, None]
    pos = X0[:, None, :] + s * (X1 - X0)[:, None, :]
    return CurveEnsemble(pos, np.full(N, 1.0 / N))


def _rejection(rho, grid, N, rng):
    flat = rho.ravel()
    top = flat.max()
    out = []
    while len(out) < N:
        cand = rng.uniform(-0.5, 0.5, size=(4 * N, grid.d))
        idx = np.floor((cand + 0.5) / grid.h).astype(int) % grid.n
        val = flat[np.ravel_multi_index(tuple(idx.T), grid.space_shape)]
        keep = rng.uniform(0, top, size=val.shape) < val
        out.extend(cand[keep])
    return np.array(out[:N])


class CurveObjective:
    def __init__(self, grid, alpha, M, weights, penalty: EndpointPenalty, sub_per_step=2):
        self.grid, self.alpha, self.M = grid, alpha, M
        self.weights = weights
        self.dep = Deposition(grid, M, sub_per_step)
        self.penalty = penalty
        self.lam = 0.0

    def K_and_grad(self, pos):
        sig = self.dep.sigma(pos, self.weights, self.alpha)
        K = K_from_sigma(sig, self.grid, self.alpha)
        G = (2 - self.alpha) * sig ** (1 - self.alpha)
        return K, self.dep.pullback(pos, self.weights, self.alpha, G)

    def __call__(self, flat):
        pos = flat.reshape(len(self.weights), self.M + 1, self.grid.d)
        K, grad = self.K_and_grad(pos)
        val = K
        for which, m in ((0, 0), (1, -1)):
            pv, pg = self.penalty.value_grad(pos[:, m], self.weights, which)
            val += self.lam * pv
            grad[:, m] += self.lam * pg
        return val, grad.ravel()


def finite_difference_gradient(fun, x, eps=1e-7):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (fun(x + e)[0] - fun(x - e)[0]) / (2 * eps)
    return g


def solve_curves(rho0, rho1, alpha, grid: TorusGrid, cfg: CurveConfig | None = None, init: CurveEnsemble | None = None):
    """Minimise ``K`` over curve ensembles whose endpoint laws approach ``rho0``, ``rho1``.

    The endpoint constraint is a quadratic penalty on kernel-smoothed
    measures with an increasing weight; each stage is an L-BFGS solve.
    Returns ``(eta, K)``.
    """
    cfg = cfg or CurveConfig()
    alpha = check_alpha(alpha)
    rho0, rho1 = check_marginals(rho0, rho1, grid)
    eta = init if init is not None else initial_ensemble(rho0, rho1, grid, cfg.N, cfg.M, cfg.seed)
    pen = EndpointPenalty(grid, rho0, rho1, cfg.bandwidth_cells)
    obj = CurveObjective(grid, alpha, eta.M, eta.weights, pen, cfg.sub_per_step)
    x = eta.positions.ravel().copy()
    if np.allclose(rho0, rho1, atol=1e-14) and np.allclose(np.diff(eta.positions, axis=1), 0):
        return eta, K_eval(eta, grid, alpha, cfg.sub_per_step)
    mismatch = np.inf
    for lam in cfg.lambdas:
        obj.lam = lam
        if cfg.fd_gradient:
            fun = lambda z: (obj(z)[0], finite_difference_gradient(obj, z))  # noqa: E731
        else:
            fun = obj
        res = minimize(fun, x, jac=True, method="L-BFGS-B",
                       options={"maxiter": cfg.max_iter, "maxcor": 20, "ftol": 1e-15, "gtol": 1e-12})
        x = res.x
        pos = x.reshape(eta.positions.shape)
        mismatch = max(pen.mismatch(pos[:, 0], eta.weights, 0), pen.mismatch(pos[:, -1], eta.weights, 1))
        log.info("curves lambda=%g: K=%.8g mismatch=%.3e (%s)", lam, obj.K_and_grad(pos)[0], mismatch, res.message)
        if mismatch <= cfg.tol_marginal and lam >= cfg.lambdas[-1]:
            break
    out = CurveEnsemble(x.reshape(eta.positions.shape), eta.weights)
    if not mismatch <= cfg.tol_marginal:
        raise NumericalError("endpoint marginals not matched", {"mismatch": mismatch, "ensemble": out})
    return out, K_eval(out, grid, alpha, cfg.sub_per_step)


def perturb_interior(eta: CurveEnsemble, scale: float, rng, modes: int = 2) -> CurveEnsemble:
    """Competitor with the same endpoints: smooth random displacement of interior nodes."""
    rng = np.random.default_rng(rng)
    s = np.linspace(0, 1, eta.M + 1)
    bump = np.zeros((eta.N, eta.M + 1, eta.d))
    for j in range(1, modes + 1):
        coef = rng.standard_normal((eta.N, 1, eta.d)) * scale / j
        bump += coef * np.sin(np.pi * j * s)[None, :, None]
    return CurveEnsemble(eta.positions + bump, eta.weights)


def check_variational_inequality(eta: CurveEnsemble, eta_other: CurveEnsemble, grid, alpha, sub_per_step=2) -> float:
    """``int int sigma_eta^(1-alpha) (sigma_other - sigma_eta)``."""
    alpha = check_alpha(alpha)
    s = sigma_eta(eta, grid, alpha, sub_per_step)
    s2 = sigma_eta(eta_other, grid, alpha, sub_per_step)
    return float(np.sum(s ** (1 - alpha) * (s2 - s)) * grid.cell_volume * grid.dt)


def check_sigma_relation(eta: CurveEnsemble, rho, w, alpha, grid, sub_per_step=2) -> float:
    """Relative L1 mismatch of ``sigma_eta^(2-alpha)`` and the grid energy density."""
    alpha = check_alpha(alpha)
    s = sigma_eta(eta, grid, alpha, sub_per_step) ** (2 - alpha)
    e = cell_energy_density(rho, w, alpha, grid)
    den = float(np.abs(e).sum())
    num = float(np.abs(s - e).sum())
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def trig_test_fields(grid: TorusGrid, count: int = 8):
    """Low-frequency space-time vector fields ``F(t, x)`` as callables returning ``(..., d)``."""
    fields = []
    specs = itertools.product((1, 2), (0.0, np.pi / 2), (0, 1))
    for k, phase, j in itertools.islice(specs, count):
        def F(t, x, k=k, phase=phase, j=j):
            x = np.asarray(x)
            arg = 2 * np.pi * k * x.sum(axis=-1) + phase
            amp = np.cos(np.pi * j * np.asarray(t)) * np.cos(arg)
            return np.repeat(amp[..., None], grid.d, axis=-1)
        fields.append(F)
    return fields


def check_flux_identity(eta: CurveEnsemble, w, F_list, grid: TorusGrid, sub_per_step=2) -> float:
    """Max over ``F`` of ``|int int F . w - E_eta int F(t, gamma) . gamma'| / int int |F| |w|``."""
    dep = Deposition(grid, eta.M, sub_per_step)
    th = (np.arange(grid.nt) + 0.5) * grid.dt
    tau = (np.arange(dep.S) + 0.5) / dep.S
    x_sub = dep._points(eta.positions)
    v_sub = eta.velocities()[:, dep.seg]
    worst = 0.0
    faces = []
    for a in range(grid.d):
        c = grid.centers()
        c[a] = c[a] + 0.5 * grid.h
        faces.append(np.moveaxis(c, 0, -1))
    for F in F_list:
        lhs = 0.0
        scale = 0.0
        for a in range(grid.d):
            Fa = np.stack([F(t, faces[a])[..., a] for t in th])
            lhs += float(np.sum(Fa * w[a]))
            scale += float(np.sum(np.abs(Fa * w[a])))
        lhs *= grid.dt * grid.cell_volume
        scale *= grid.dt * grid.cell_volume
        Fc = F(tau[None, :], x_sub)
        rhs = float(np.sum(eta.weights[:, None] * np.sum(Fc * v_sub, axis=-1)) * dep.dtau)
        if scale <= 1e-300:
            err = 0.0 if abs(rhs) <= 1e-14 else float("inf")
        else:
            err = abs(lhs - rhs) / scale
        worst = max(worst, err)
    return worst


def marginal_w1_1d(eta: CurveEnsemble, rho, which: int, grid: TorusGrid) -> float:
    """Circle ``W_1`` distance between an endpoint law and a grid density (d=1)."""
    x = np.sort((eta.endpoint(which)[:, 0] + 0.5) % 1.0 - 0.5)
    w = eta.weights[np.argsort((eta.endpoint(which)[:, 0] + 0.5) % 1.0 - 0.5)]
    xs = np.linspace(-0.5, 0.5, 4 * grid.n * 8 + 1)
    Fe = np.searchsorted(x, xs, side="right")
    Fe = np.concatenate([[0.0], np.cumsum(w)])[Fe]
    cdf = np.concatenate([[0.0], np.cumsum(rho * grid.h)])
    Ft = np.interp(xs, -0.5 + grid.h * np.arange(grid.n + 1), cdf)
    diff = Fe - Ft
    # on the circle W1 = min_c int |F - G - c|, attained at the median of the difference
    c = np.median(diff)
    return float(np.mean(np.abs(diff - c)))


def tail_fractions(eta: CurveEnsemble, alpha, K, radii=(2.0, 4.0, 8.0)):
    """Fraction of mass with ``||gamma'||_{L^p} > R`` and the Markov/Hölder bound from ``K``.

    With ``p = 2/(2-alpha)``, Markov's inequality on ``int |gamma'|^p`` and
    ``int int sigma <= K^(1/(2-alpha))`` give ``frac <= K^(1/(2-alpha)) R^(-p)``.
    """
    p = 2 / (2 - alpha)
    norms = eta.action(alpha) ** (1 / p)
    out = []
    for R in radii:
        frac = float(eta.weights[norms > R].sum())
        bound = K ** (1 / (2 - alpha)) * R ** (-p)
        out.append((R, frac, bound))
    return out
