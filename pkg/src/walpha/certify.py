"""Optimality and regularity checks for a computed triple ``(rho, w, phi)``.

Every check returns a non-negative residual (or a signed value where the
sign carries meaning) so that callers decide on thresholds.  The discrete
quantities follow the conventions of :mod:`walpha.functional`: time
derivatives of ``phi`` and densities live at half steps, gradients are
averaged over the two ends of a step, and mobilities are averaged over the
two cells adjacent to a face.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .energy import check_alpha
from .errors import UnsupportedDimensionError
from .functional import (
    averaged_gradient,
    boundary_term,
    cell_gradient_sq,
    dual_integrand,
    dual_objective,
    energy_per_time,
    face_mobility,
    kinetic_energy,
    time_average,
    time_derivative,
)
from .grid import TorusGrid
from .solver import relative_gap

TINY = 1e-14


@dataclass
class Certificate:
    gap_rel: float = 0.0
    flux_residual_rel: float = 0.0
    hj_residual_rel: float = 0.0
    support_violation: float = 0.0
    transversality_residual: float = 0.0
    linfty_excess: float = 0.0
    lower_bound_excess: float = float("nan")
    speed_variation_rel: float = 0.0
    esssup_variation: float = 0.0
    essinf_variation: float = 0.0
    homogeneity_residual: float = 0.0
    ibp_slack: float = 0.0

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}

    def to_json(self) -> str:
        # NaN is not valid JSON; unavailable fields are written as null
        d = {k: (None if not np.isfinite(v) else v) for k, v in self.to_dict().items()}
        return json.dumps(d, indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        raw = json.loads(text)
        return cls(**{k: (float("nan") if v is None else float(v)) for k, v in raw.items()})


def dual_value(phi, rho0, rho1, alpha, grid: TorusGrid) -> float:
    """Discrete ``J(phi)``; ``+inf`` when ``phi`` leaves the domain of ``L``."""
    return dual_objective(phi, rho0, rho1, check_alpha(alpha), grid)


def _rel(num, den):
    if den <= TINY:
        return 0.0 if num <= TINY else 1.0
    return float(num / den)


def flux_residual(rho, w, phi, alpha, grid) -> float:
    """``|w - mbar grad phi / 2| / |w|`` over all faces and half steps.

    When ``w`` vanishes the residual is 1 if the model flux does not and 0
    otherwise.
    """
    mbar = face_mobility(time_average(rho), alpha, grid)
    model = 0.5 * np.nan_to_num(mbar) * averaged_gradient(phi, grid)
    num = np.linalg.norm(w - model)
    nw = np.linalg.norm(w)
    if nw <= TINY * max(1.0, np.linalg.norm(model)):
        scale = max(np.linalg.norm(model), TINY)
        return 0.0 if np.linalg.norm(model) <= 1e-12 else float(num / scale)
    return float(num / nw)


def hj_residual(rho, phi, alpha, grid, rho_floor) -> float:
    """Masked L1 norm of ``d_t phi + (alpha/4) rho^(alpha-1) |grad phi|^2`` over ``|d_t phi|``."""
    rh = time_average(rho)
    dphi = time_derivative(phi, grid)
    g2 = cell_gradient_sq(phi, grid)
    mask = rh > rho_floor
    if not np.any(mask):
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        r = dphi + 0.25 * alpha * np.where(mask, rh, 1.0) ** (alpha - 1) * g2
    num = float(np.abs(r[mask]).sum())
    den = float(np.abs(dphi[mask]).sum())
    return _rel(num, den)


def support_violation(rho, phi, grid, rho_floor, grad_tol=1e-6) -> float:
    """Space-time measure of ``{rho <= floor}`` where the potential still has a gradient."""
    rh = time_average(rho)
    g = np.sqrt(cell_gradient_sq(phi, grid))
    bad = (rh <= rho_floor) & (g > grad_tol)
    return float(bad.sum() * grid.cell_volume * grid.dt)


def ibp_slack(rho, w, phi, rho0, rho1, grid) -> float:
    """``int int (rho d_t phi + w . grad phi) + int phi(0) rho0 - int phi(1) rho1``.

    Non-negative for feasible pairs and admissible potentials; the discrete
    scheme makes it vanish identically for feasible pairs.
    """
    bulk = np.sum(time_average(rho) * time_derivative(phi, grid))
    bulk += np.sum(w * averaged_gradient(phi, grid))
    bulk *= grid.dt * grid.cell_volume
    return float(bulk + boundary_term(phi, rho0, rho1, grid))


def transversality_residual(rho, w, phi, rho0, rho1, grid) -> float:
    """Relative defect of ``int int rho d_t phi + w . grad phi = int phi(1) rho1 - int phi(0) rho0``."""
    rhs = -boundary_term(phi, rho0, rho1, grid)
    slack = ibp_slack(rho, w, phi, rho0, rho1, grid)
    bulk_scale = grid.dt * grid.cell_volume * (
        np.abs(time_average(rho) * time_derivative(phi, grid)).sum()
        + np.abs(w * averaged_gradient(phi, grid)).sum()
    )
    return _rel(abs(slack), max(abs(rhs), bulk_scale))


def check_optimality_system(rho, w, phi, alpha, grid: TorusGrid, rho_floor=1e-6, rho0=None, rho1=None) -> dict:
    alpha = check_alpha(alpha)
    rho0 = rho[0] if rho0 is None else rho0
    rho1 = rho[-1] if rho1 is None else rho1
    return {
        "flux_residual_rel": flux_residual(rho, w, phi, alpha, grid),
        "hj_residual_rel": hj_residual(rho, phi, alpha, grid, rho_floor),
        "support_violation": support_violation(rho, phi, grid, rho_floor),
        "transversality_residual": transversality_residual(rho, w, phi, rho0, rho1, grid),
    }


def check_linfty(rho, rho0, rho1) -> float:
    bound = max(np.max(rho0), np.max(rho1))
    axes = tuple(range(1, np.ndim(rho)))
    return float(max(0.0, np.max(np.max(rho, axis=axes) - bound)))


def check_lower_bound_1d(rho, rho0, rho1, grid: TorusGrid) -> float:
    if grid.d != 1:
        raise UnsupportedDimensionError("the lower-bound check is specific to d = 1")
    C = min(np.min(rho0), np.min(rho1))
    return float(max(0.0, np.max(C - np.min(rho, axis=1))))


def check_constant_speed(rho, w, alpha, grid) -> float:
    e = energy_per_time(rho, w, alpha, grid)
    mean = float(e.mean())
    if not mean > TINY:
        return 0.0
    return float((e.max() - e.min()) / mean)


def check_esssup(phi) -> tuple:
    phi = np.asarray(phi)
    axes = tuple(range(1, phi.ndim))
    mx = phi.max(axis=axes)
    mn = phi.min(axis=axes)
    return float(np.abs(mx - mx[0]).max()), float(np.abs(mn - mn[0]).max())


def check_homogeneity(phi, rho0, rho1, alpha, grid) -> float:
    """Relative mismatch of ``(2-a)/(1-a) int int L = int phi(1) rho1 - int phi(0) rho0``.

    Undefined for ``alpha = 1`` (the integrand is an indicator); returns NaN there.
    """
    alpha = check_alpha(alpha)
    if alpha >= 1.0:
        return float("nan")
    bulk = float(dual_integrand(phi, alpha, grid).sum() * grid.dt * grid.cell_volume)
    lhs = (2 - alpha) / (1 - alpha) * bulk
    rhs = -boundary_term(phi, rho0, rho1, grid)
    if not np.isfinite(lhs):
        return float("inf")
    return _rel(abs(lhs - rhs), max(abs(lhs), abs(rhs)))


def check_ibp(rho, w, phi, rho0, rho1, grid) -> float:
    return ibp_slack(rho, w, phi, rho0, rho1, grid)


def certify(rho, w, phi, rho0, rho1, alpha, grid: TorusGrid, rho_floor=1e-6) -> Certificate:
    """Run every check on a computed triple and collect the results."""
    alpha = check_alpha(alpha)
    W2 = kinetic_energy(rho, w, alpha, grid)
    J = dual_value(phi, rho0, rho1, alpha, grid)
    gap = relative_gap(W2, J)
    opt = check_optimality_system(rho, w, phi, alpha, grid, rho_floor, rho0, rho1)
    sup_var, inf_var = check_esssup(phi)
    return Certificate(
        gap_rel=float(gap),
        linfty_excess=check_linfty(rho, rho0, rho1),
        lower_bound_excess=check_lower_bound_1d(rho, rho0, rho1, grid) if grid.d == 1 else float("nan"),
        speed_variation_rel=check_constant_speed(rho, w, alpha, grid),
        esssup_variation=sup_var,
        essinf_variation=inf_var,
        homogeneity_residual=check_homogeneity(phi, rho0, rho1, alpha, grid),
        ibp_slack=check_ibp(rho, w, phi, rho0, rho1, grid),
        **opt,
    )
