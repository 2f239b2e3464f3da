"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines as they
are produced; they are also repeated in the terminal summary of any run.
"""
import time

import numpy as np
import pytest

from walpha.certify import (
    check_constant_speed,
    check_esssup,
    check_homogeneity,
    check_linfty,
    check_lower_bound_1d,
    check_optimality_system,
    flux_residual,
    hj_residual,
    transversality_residual,
)
from walpha.curves import (
    CurveConfig,
    check_flux_identity,
    check_sigma_relation,
    check_variational_inequality,
    perturb_interior,
    solve_curves,
    trig_test_fields,
)
from walpha.energy import check_conjugacy, prox_H
from walpha.fixtures import bump_pair, random_density
from walpha.geodist import check_descent, check_scaling, closed_form_constant, geodesic_cost
from walpha.grid import (
    TorusGrid,
    continuity_residual,
    discrete_divergence,
    discrete_gradient,
    project_continuity,
)
from walpha.oracles import brute_force_tiny, hminus1_distance, w2_periodic_1d
from walpha.solver import SolveConfig, solve_geodesic

from conftest import ACCEPTANCE_LINES, cached_solve, cached_uniform_to_bump, interpolation_path
from test_energy import _grid_argmin
from test_geodist import random_curves, smooth_weight

pytestmark = pytest.mark.acceptance


def verdict(number, title, checks, started):
    """Record one line for the criterion and fail the test if any sub-check failed."""
    ok = all(c[1] for c in checks)
    worst = "; ".join(f"{name}={value}" for name, good, value in checks if not good) or "all sub-checks met"
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} ({time.time() - started:.1f}s) - {worst}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_01_endpoint_oracles():
    t0 = time.time()
    checks = []
    for which in range(3):
        grid, r0, r1, *_, rep0 = cached_solve(0.0, which, tol_gap=1e-5)
        err0 = abs(rep0.W2 / hminus1_distance(r0, r1, grid) - 1)
        *_, rep1 = cached_solve(1.0, which, tol_gap=1e-5)
        err1 = abs(rep1.W2 / w2_periodic_1d(r0, r1, grid) - 1)
        checks += [(f"H-1 pair {which}", err0 <= 1e-2, f"{err0:.2e}"),
                   (f"W2 pair {which}", err1 <= 1e-2, f"{err1:.2e}")]
    verdict(1, "alpha=0 vs H^-1 and alpha=1 vs quantile W2 within 1%", checks, t0)


def test_criterion_02_duality_gap():
    t0 = time.time()
    checks = []
    for alpha in (0.6, 0.8, 0.95):
        for which in range(3):
            *_, rep = cached_solve(alpha, which, tol_gap=1e-5)
            checks.append((f"d=1 a={alpha} pair {which}", rep.gap <= 1e-3 and rep.iterations <= 5000,
                           f"gap {rep.gap:.2e} after {rep.iterations}"))
        g2 = TorusGrid(2, 16, 8)
        a, b = bump_pair(g2, 0)
        *_, rep = solve_geodesic(a, b, alpha, g2, SolveConfig(tol_gap=1e-3))
        checks.append((f"d=2 a={alpha}", rep.gap <= 1e-3 and rep.iterations <= 5000,
                       f"gap {rep.gap:.2e} after {rep.iterations}"))
    verdict(2, "relative duality gap <= 1e-3 within 5000 iterations", checks, t0)


def test_criterion_03_optimality_system():
    t0 = time.time()
    checks = []
    for alpha in (0.6, 0.8, 0.95):
        grid, r0, r1, rho, w, phi, rep = cached_solve(alpha, 0, tol_gap=1e-5)
        opt = check_optimality_system(rho, w, phi, alpha, grid, rho0=r0, rho1=r1)
        for key in ("flux_residual_rel", "hj_residual_rel", "transversality_residual"):
            checks.append((f"{key} a={alpha}", opt[key] <= 5e-2, f"{opt[key]:.2e}"))
    # injected violations must be flagged by the same thresholds
    grid, r0, r1, rho, w, phi, rep = cached_solve(0.8, 0, tol_gap=1e-5)
    f_bad = flux_residual(rho, np.zeros_like(w), phi, 0.8, grid)
    x = grid.centers()[0]
    phi_bad = phi + 0.5 * np.ptp(phi) * np.sin(2 * np.pi * x)[None] * grid.times()[:, None]
    h_bad = hj_residual(rho, phi_bad, 0.8, grid, 1e-6)
    t_bad = transversality_residual(rho, 1.5 * w, phi, r0, r1, grid)
    checks += [("injected flux", f_bad > 5e-2, f"{f_bad:.2e}"),
               ("injected HJ", h_bad > 5e-2, f"{h_bad:.2e}"),
               ("injected transversality", t_bad > 5e-2, f"{t_bad:.2e}")]
    verdict(3, "optimality system residuals <= 5e-2, injected violations detected", checks, t0)


def test_criterion_04_maximum_principle():
    t0 = time.time()
    checks = []
    fixtures = [cached_solve(0.8, which, tol_gap=1e-5) for which in range(3)] + [cached_uniform_to_bump()]
    for k, (grid, r0, r1, rho, *_rest) in enumerate(fixtures):
        bound = max(r0.max(), r1.max())
        C = min(r0.min(), r1.min())
        ex = check_linfty(rho, r0, r1)
        lb = check_lower_bound_1d(rho, r0, r1, grid)
        checks += [(f"linfty fixture {k}", ex <= 0.02 * bound, f"{ex / bound:.2e}"),
                   (f"lower bound fixture {k}", lb <= 0.02 * C, f"{lb / C:.2e}")]
    verdict(4, "L-infinity excess <= 2% and 1D lower-bound excess <= 2% of C", checks, t0)


def test_criterion_05_constant_speed():
    t0 = time.time()
    checks = []
    for alpha in (0.6, 0.8, 0.95):
        grid, r0, r1, rho, w, phi, rep = cached_solve(alpha, 0, tol_gap=1e-5)
        v = check_constant_speed(rho, w, alpha, grid)
        checks.append((f"speed variation a={alpha}", v <= 0.05, f"{v:.2e}"))
    grid, r0, r1, *_ = cached_solve(0.8, 0, tol_gap=1e-5)
    crho, cw = interpolation_path(r0, r1, grid, lambda t: t**2)
    feas = float(np.abs(continuity_residual(crho, cw, grid)).max())
    v = check_constant_speed(crho, cw, 0.8, grid)
    checks += [("competitor feasible", feas <= 1e-10, f"{feas:.1e}"),
               ("reparametrized competitor", v > 0.2, f"{v:.2e}")]
    verdict(5, "speed variation <= 5%, time-reparametrized competitor > 20%", checks, t0)


def test_criterion_06_homogeneity_and_esssup():
    t0 = time.time()
    checks = []
    for alpha in (0.6, 0.8, 0.95):
        grid, r0, r1, rho, w, phi, rep = cached_solve(alpha, 0, tol_gap=1e-5)
        hom = check_homogeneity(phi, r0, r1, alpha, grid)
        sup_var, inf_var = check_esssup(phi)
        osc = float(np.ptp(phi))
        checks += [(f"homogeneity a={alpha}", hom <= 5e-2, f"{hom:.2e}"),
                   (f"ess-sup a={alpha}", sup_var <= 5e-2 * osc, f"{sup_var / osc:.2e}"),
                   (f"ess-inf a={alpha}", inf_var <= 5e-2 * osc, f"{inf_var / osc:.2e}")]
    verdict(6, "homogeneity identity and ess-sup/ess-inf constancy <= 5e-2", checks, t0)


def test_criterion_07_curve_measures():
    t0 = time.time()
    alpha = 0.8
    grid, r0, r1, rho, w, phi, rep = cached_solve(alpha, 0, tol_gap=1e-5)
    eta, K = solve_curves(r0, r1, alpha, grid, CurveConfig(N=2000, M=16))
    rel = abs(K / rep.W2 - 1)
    rng = np.random.default_rng(7)
    vi = min(check_variational_inequality(eta, perturb_interior(eta, 0.005, rng), grid, alpha) for _ in range(20))
    sig64 = check_sigma_relation(eta, rho, w, alpha, grid)
    g32 = TorusGrid(1, 32, 16)
    a32, b32 = bump_pair(g32, 0)
    eta32, _ = solve_curves(a32, b32, alpha, g32, CurveConfig(N=1000, M=8))
    rho32, w32, _, _ = solve_geodesic(a32, b32, alpha, g32, SolveConfig(tol_gap=1e-5))
    sig32 = check_sigma_relation(eta32, rho32, w32, alpha, g32)
    flux = check_flux_identity(eta, w, trig_test_fields(grid, 8), grid)
    checks = [("K vs grid W2", rel <= 0.05, f"{rel:.2e}"),
              ("variational inequality / K", vi >= -1e-3 * K, f"{vi / K:.2e}"),
              ("sigma relation n=64", sig64 <= 0.10, f"{sig64:.2e}"),
              ("sigma relation decreases 32->64", sig64 < sig32, f"{sig32:.2e}->{sig64:.2e}"),
              ("flux identity", flux <= 0.10, f"{flux:.2e}")]
    verdict(7, "curve-measure equivalence, VI, sigma relation, flux identity", checks, t0)


def test_criterion_08_weighted_geodesic_cost():
    t0 = time.time()
    checks = []
    g = TorusGrid(1, 64, 64)
    worst = 0.0
    for alpha in (0.3, 0.6, 0.9):
        for s, x, t, y in [(0.0, 0, 1.0, 7), (0.25, 10, 0.75, 3), (0.0, 0, 0.5, 20), (0.1875, 60, 1.0, 2)]:
            c = geodesic_cost(1.0, s, [x], t, [y], alpha, g, radius=3)
            worst = max(worst, abs(c / closed_form_constant([x], [y], s, t, alpha, g) - 1))
    checks.append(("closed form a=1", worst <= 0.02, f"{worst:.2e}"))
    rng = np.random.default_rng(2024)
    mis = 0.0
    for _ in range(20):
        a = smooth_weight(g, rng)
        x, y = rng.integers(0, 64, size=2)
        mis = max(mis, check_scaling(a, [x], [y], 0.25, 0.75, 0.7, g))
    checks.append(("time scaling, 20 weights", mis <= 0.02, f"{mis:.2e}"))
    grid, r0, r1, rho, w, phi, rep = cached_solve(0.8, 0, tol_gap=1e-5)
    osc = float(np.ptp(phi))
    inc = max(check_descent(phi, c, 0.8, grid).max_increment for c in random_curves(grid, np.random.default_rng(77), 100))
    checks.append(("descent, 100 curves", inc <= 5e-2 * osc, f"{inc / osc:.2e}"))
    verdict(8, "weighted geodesic cost: closed form, scaling, descent", checks, t0)


def test_criterion_09_tiny_brute_force():
    t0 = time.time()
    g = TorusGrid(1, 4, 2)
    r0, r1 = bump_pair(g, 0)
    ref = brute_force_tiny(r0, r1, 0.8, g)
    *_, rep = solve_geodesic(r0, r1, 0.8, g, SolveConfig(tol_gap=1e-9))
    rel = abs(rep.W2 / ref - 1)
    verdict(9, "solver vs brute force on n=4, N_t=2 within 1e-4", [("relative", rel <= 1e-4, f"{rel:.2e}")], t0)


def test_criterion_10_metric_properties():
    t0 = time.time()
    tol = 1e-5
    grid = TorusGrid(1, 64, 32)
    cfg = SolveConfig(tol_gap=tol)
    rng = np.random.default_rng(10)
    checks = []

    def W2(a, b):
        return solve_geodesic(a, b, 0.8, grid, cfg)[3].W2

    for k in range(5):
        r = [random_density(grid, rng) for _ in range(3)]
        d01, d10, d12, d02 = W2(r[0], r[1]), W2(r[1], r[0]), W2(r[1], r[2]), W2(r[0], r[2])
        scale = max(d01, d10, d12, d02)
        sym = abs(d01 - d10)
        tri = np.sqrt(d02) - np.sqrt(d01) - np.sqrt(d12)
        checks += [(f"symmetry triple {k}", sym <= 2 * tol * scale, f"{sym / scale:.2e}"),
                   (f"triangle triple {k}", tri <= 3 * tol * np.sqrt(scale), f"{tri / np.sqrt(scale):.2e}")]
    verdict(10, "symmetry and triangle inequality on 5 random triples", checks, t0)


def test_criterion_11_discrete_exactness():
    t0 = time.time()
    rng = np.random.default_rng(11)
    adj = 0.0
    for d in (1, 2):
        g = TorusGrid(d, 16, 4)
        for _ in range(50):
            phi = rng.standard_normal(g.space_shape)
            w = rng.standard_normal((d,) + g.space_shape)
            lhs = np.sum(discrete_gradient(phi, g) * w)
            adj = max(adj, abs(lhs + np.sum(phi * discrete_divergence(w, g))) / max(1.0, abs(lhs)))
    res = 0.0
    for d in (1, 2):
        g = TorusGrid(d, 16, 8)
        r0, r1 = random_density(g, rng), random_density(g, rng)
        p_rho, p_w, _ = project_continuity(rng.standard_normal(g.density_shape), rng.standard_normal(g.flux_shape),
                                           r0, r1, g)
        res = max(res, float(np.abs(continuity_residual(p_rho, p_w, g)).max()))
    prox = 0.0
    for _ in range(10):
        rt, wt = rng.uniform(-0.5, 2.0), rng.uniform(-2, 2)
        tau, alpha = rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)
        r, w = prox_H(rt, wt, tau, alpha)
        rg, wg = _grid_argmin(rt, wt, tau, alpha, r, w)
        prox = max(prox, abs(r - rg), abs(w - wg))
    conj = max(check_conjugacy(a, sample_count=4, rng=7) for a in (0.2, 0.5, 0.8, 0.95))
    checks = [("adjointness", adj <= 1e-12, f"{adj:.1e}"),
              ("projection residual", res <= 1e-10, f"{res:.1e}"),
              ("prox vs lattice", prox <= 1e-4, f"{prox:.1e}"),
              ("conjugacy", conj <= 1e-3, f"{conj:.1e}")]
    verdict(11, "adjointness, projection, prox and conjugacy exactness", checks, t0)
