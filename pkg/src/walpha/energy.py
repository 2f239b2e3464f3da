"""Pointwise kinetic energy ``H(rho, w) = |w|^2 / rho^alpha``, its conjugate and prox.

All kernels are vectorised.  A flux ``w`` whose ``ndim`` exceeds that of
``rho`` by one carries its vector components on the last axis; otherwise it
is taken as a scalar (one-dimensional) flux.  ``+inf`` is the sentinel for
points outside the effective domain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalError

ROOT_TOL = 1e-12
ROOT_MAXITER = 200


def check_alpha(alpha: float, d: int | None = None, dual: bool = False) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"alpha must lie in [0, 1], got {alpha}")
    if dual and d is not None and not alpha > 1.0 - 2.0 / d:
        raise ConfigurationError(
            f"dual potential requires alpha > 1 - 2/d = {1 - 2 / d}, got {alpha}"
        )
    return alpha


def kappa(alpha: float) -> float:
    """Constant of the dual integrand; ``1/4`` in the limit ``alpha -> 0``."""
    if alpha == 0.0:
        return 0.25
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"kappa is defined for alpha in [0, 1), got {alpha}")
    return (1 - alpha) * alpha ** (alpha / (1 - alpha)) / 4 ** (1 / (1 - alpha))


def d_alpha(alpha: float) -> float:
    """Constant of the descent inequality along curves."""
    if alpha == 0.0:
        return 1.0
    return (2 - alpha) * alpha ** (alpha / (2 - alpha)) / 2 ** (2 / (2 - alpha))


@dataclass(frozen=True)
class EnergyConstants:
    alpha: float
    kappa: float
    d_alpha: float

    @classmethod
    def of(cls, alpha: float) -> "EnergyConstants":
        alpha = check_alpha(alpha)
        k = kappa(alpha) if alpha < 1.0 else float("nan")
        return cls(alpha, k, d_alpha(alpha))


def _split(rho, w):
    rho = np.asarray(rho, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.ndim == rho.ndim + 1:
        wsq = np.sum(w * w, axis=-1)
        vector = True
    elif w.ndim == rho.ndim:
        wsq = w * w
        vector = False
    else:
        raise ConfigurationError(f"incompatible shapes rho{rho.shape} w{w.shape}")
    return rho, w, wsq, vector


def H_sq(rho, wsq, alpha):
    """``H`` as a function of ``rho`` and ``|w|^2``; ``+inf`` off the domain."""
    rho = np.asarray(rho, dtype=float)
    wsq = np.asarray(wsq, dtype=float)
    out = np.full(np.broadcast(rho, wsq).shape, np.inf)
    rho, wsq = np.broadcast_arrays(rho, wsq)
    if alpha == 0.0:
        ok = rho >= 0
        out[ok] = wsq[ok]
        return out
    pos = rho > 0
    out[pos] = wsq[pos] / rho[pos] ** alpha
    out[(rho == 0) & (wsq == 0)] = 0.0
    return out


def L_sq(a, bsq, alpha):
    """Conjugate of ``H`` as a function of ``a`` and ``|b|^2``."""
    a = np.asarray(a, dtype=float)
    bsq = np.asarray(bsq, dtype=float)
    a, bsq = np.broadcast_arrays(a, bsq)
    out = np.full(a.shape, np.inf)
    if alpha == 0.0:
        ok = a <= 0
        out[ok] = 0.25 * bsq[ok]
        return out
    if alpha == 1.0:
        out[a + 0.25 * bsq <= 0] = 0.0
        return out
    neg = a < 0
    p = alpha / (1 - alpha)
    out[neg] = kappa(alpha) * bsq[neg] ** (1 / (1 - alpha)) * (-a[neg]) ** (-p)
    out[(a == 0) & (bsq == 0)] = 0.0
    return out


def eval_H(rho, w, alpha):
    rho, _, wsq, _ = _split(rho, w)
    if np.any(rho < 0):
        raise DomainError("H is only defined for rho >= 0")
    out = H_sq(rho, wsq, check_alpha(alpha))
    return out[()] if out.ndim == 0 else out


def eval_L(a, b, alpha):
    a, _, bsq, _ = _split(a, b)
    out = L_sq(a, bsq, check_alpha(alpha))
    return out[()] if out.ndim == 0 else out


def _fixed_point_map(x, rt, c, tau, alpha):
    xa = x**alpha
    den = xa + 2 * tau
    f = x - rt - c * x ** (alpha - 1) / den**2
    fp = 1 + c * x ** (alpha - 2) / den**3 * ((1 - alpha) * den + 2 * alpha * xa)
    return f, fp


def _solve_density(rt, c, tau, alpha):
    """Root of ``rho - rt - c rho^(alpha-1) / (rho^alpha + 2 tau)^2`` on ``(0, hi]``.

    The left side is increasing in ``rho`` (derivative of a convex reduced
    objective), so a bracketed Newton iteration with bisection fallback is safe.
    """
    lo = np.zeros_like(rt)
    hi = np.maximum(1.0, rt + c / (4 * tau**2)) + 1.0
    x = np.where(rt > 0, np.minimum(rt, hi), 0.5 * hi)
    x = np.where(x <= 0, 0.5 * hi, x)
    active = np.ones(rt.shape, dtype=bool)
    for _ in range(ROOT_MAXITER):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            return x
        xi = x[idx]
        f, fp = _fixed_point_map(xi, rt[idx], c[idx], tau, alpha)
        neg = f < 0
        lo[idx] = np.where(neg, xi, lo[idx])
        hi[idx] = np.where(neg, hi[idx], xi)
        xn = xi - f / fp
        bad = ~((xn > lo[idx]) & (xn < hi[idx]))
        xn = np.where(bad, 0.5 * (lo[idx] + hi[idx]), xn)
        x[idx] = xn
        done = (np.abs(xn - xi) <= ROOT_TOL) | (hi[idx] - lo[idx] <= ROOT_TOL) | (f == 0)
        active[idx[done]] = False
    if np.any(active):
        bad = np.nonzero(active)[0]
        raise NumericalError(
            "prox_H root finder did not converge",
            {"count": int(bad.size), "rho_tilde": rt[bad[:5]].tolist(), "c": c[bad[:5]].tolist()},
        )
    return x


def prox_H(rho_t, w_t, tau, alpha):
    """Proximal map of ``tau * H`` at ``(rho_t, w_t)``.

    The interior candidate solves the two stationarity equations; the
    boundary point ``(0, 0)`` is compared explicitly.
    """
    if not tau > 0:
        raise ConfigurationError(f"prox step must be positive, got {tau}")
    alpha = check_alpha(alpha)
    rho_t, w_t, wsq, vector = _split(rho_t, w_t)
    shape = rho_t.shape
    rt = rho_t.reshape(-1)
    ws = wsq.reshape(-1)
    wt = w_t.reshape((rt.size, -1)) if vector else w_t.reshape((rt.size, 1))

    if alpha == 0.0:
        rho = np.maximum(rt, 0.0)
        w = wt / (1 + 2 * tau)
    else:
        rho = np.maximum(rt, 0.0)
        w = np.zeros_like(wt)
        mv = ws > 0
        if np.any(mv):
            r = _solve_density(rt[mv], alpha * tau * ws[mv], tau, alpha)
            ra = r**alpha
            rho[mv] = r
            w[mv] = wt[mv] * (ra / (ra + 2 * tau))[:, None]
            obj = (ws[mv] * ra / (ra + 2 * tau) ** 2  # H at the candidate
                   + ((r - rt[mv]) ** 2 + ws[mv] * (2 * tau / (ra + 2 * tau)) ** 2) / (2 * tau))
            obj0 = (rt[mv] ** 2 + ws[mv]) / (2 * tau)
            lose = obj0 < obj
            if np.any(lose):
                sub = np.nonzero(mv)[0][lose]
                rho[sub] = 0.0
                w[sub] = 0.0
    rho = rho.reshape(shape)
    w = w.reshape(w_t.shape)
    if rho.ndim == 0:
        return float(rho), (w if vector else float(w))
    return rho, w


def check_conjugacy(alpha, sample_count=8, rng=None, levels=4, size=301):
    """Largest relative gap between ``L(a, b)`` and a brute-force lattice supremum.

    The supremum of ``a rho + b.w - H(rho, w)`` is searched on nested lattices
    zooming in on the running maximiser; the search uses only ``H``.  The
    coarse box reaches ``rho ~ 1e8``, which covers the sampled ``(a, b)`` for
    ``alpha <= 0.95``; closer to 1 the maximisers escape any fixed box.
    """
    alpha = check_alpha(alpha)
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError("check_conjugacy needs alpha in (0, 1)")
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(sample_count):
        a = -rng.uniform(0.2, 3.0)
        b = rng.uniform(-2.0, 2.0)
        sup = lattice_sup(a, b, alpha, levels=levels, size=size)
        ref = float(L_sq(a, b * b, alpha))
        # values below ~1e-10 are lattice noise; compare those absolutely
        worst = max(worst, abs(sup - ref) / max(abs(ref), 1e-10))
    return worst


def lattice_sup(a, b, alpha, rho_max=None, w_max=None, levels=4, size=301):
    """Brute-force ``sup_{rho >= 0, w} a rho + b w - H(rho, w)`` for scalar ``b``."""
    if rho_max is None or w_max is None:
        # coarse box from a few decades of trial scales, independent of L
        scales = 10.0 ** np.arange(-4, 9)
        best = -np.inf
        for s in scales:
            r = np.linspace(0, s, 41)
            w = np.linspace(-s, s, 41)
            R, W = np.meshgrid(r, w, indexing="ij")
            v = a * R + b * W - H_sq(R, W * W, alpha)
            if v.max() > best:
                best, arg = v.max(), np.unravel_index(np.argmax(v), v.shape)
                rho_max, w_max = max(3 * r[arg[0]], 3 * s / 40), max(3 * abs(w[arg[1]]), 3 * s / 40)
    r_lo, r_hi, w_lo, w_hi = 0.0, rho_max, -w_max, w_max
    best = -np.inf
    for _ in range(levels):
        r = np.linspace(r_lo, r_hi, size)
        w = np.linspace(w_lo, w_hi, size)
        R, W = np.meshgrid(r, w, indexing="ij")
        v = a * R + b * W - H_sq(R, W * W, alpha)
        i, j = np.unravel_index(np.argmax(v), v.shape)
        best = max(best, v[i, j])
        dr, dw = 4 * (r[1] - r[0]), 4 * (w[1] - w[0])
        r_lo, r_hi = max(0.0, r[i] - dr), r[i] + dr
        w_lo, w_hi = w[j] - dw, w[j] + dw
    return float(best)
