import numpy as np
import pytest

from walpha.errors import ConfigurationError, InfeasibleMarginalsError
from walpha.fixtures import bump_pair, random_density
from walpha.functional import kinetic_energy
from walpha.grid import TorusGrid, continuity_residual
from walpha.oracles import hminus1_distance, w2_periodic_1d
from walpha.solver import SolveConfig, relative_gap, solve_geodesic, sweep_alpha

from conftest import cached_solve


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SolveConfig(tau=0.0)
    with pytest.raises(ConfigurationError):
        SolveConfig(relax=2.0)
    with pytest.raises(ConfigurationError):
        SolveConfig(tol_gap=0.0)


def test_mass_mismatch_rejected():
    g = TorusGrid(1, 16, 4)
    with pytest.raises(InfeasibleMarginalsError):
        solve_geodesic(np.ones(16), 1.5 * np.ones(16), 0.5, g)


def test_equal_marginals_zero_distance():
    g = TorusGrid(1, 32, 8)
    r = random_density(g, 0)
    rho, w, phi, rep = solve_geodesic(r, r, 0.7, g)
    assert rep.W2 <= 1e-8 and rep.converged
    assert np.abs(w).max() <= 1e-8
    assert np.ptp(phi) <= 1e-8


def test_alpha_zero_matches_hminus1():
    grid, r0, r1, rho, w, phi, rep = cached_solve(0.0)
    ref = hminus1_distance(r0, r1, grid)
    assert rep.W2 == pytest.approx(ref, rel=1e-2)


def test_alpha_one_matches_quantile_w2():
    grid, r0, r1, rho, w, phi, rep = cached_solve(1.0)
    ref = w2_periodic_1d(r0, r1, grid)
    assert rep.W2 == pytest.approx(ref, rel=1e-2)


def test_feasibility_and_report(solved_08):
    grid, r0, r1, rho, w, phi, rep = solved_08
    assert rep.converged and rep.gap <= 1e-5
    assert np.abs(continuity_residual(rho, w, grid)).max() <= 1e-8
    assert rep.residual_continuity <= 1e-8
    assert rep.W2 == pytest.approx(kinetic_energy(rho, w, 0.8, grid), rel=1e-12)
    assert rep.energy_per_time.shape == (grid.nt,)
    assert rep.W2 == pytest.approx(rep.energy_per_time.sum() * grid.dt)
    assert phi[0].min() == pytest.approx(0.0, abs=1e-14)
    d = rep.to_dict()
    assert set(d) >= {"W2", "dual_value", "gap", "iterations", "residual_flux", "residual_HJ"}


def test_weak_duality_every_recorded_iterate(solved_08):
    *_, rep = solved_08
    for it, W2, J, gap, res in rep.history:
        if np.isfinite(J):
            assert W2 + J >= -1e-8 * max(W2, 1e-8)


def test_energy_nonincreasing_after_burn_in(solved_08):
    *_, rep = solved_08
    vals = [(it, W2) for it, W2, *_ in rep.history if it > 50]
    for (_, a), (_, b) in zip(vals, vals[1:]):
        assert b <= a + 1e-6 * a


def test_relative_gap_conventions():
    assert relative_gap(1.0, -0.999) == pytest.approx(1e-3)
    assert relative_gap(1.0, np.inf) == np.inf
    assert relative_gap(0.0, 0.0) == 0.0


def test_tiny_instance_matches_brute_force():
    g = TorusGrid(1, 4, 2)
    r0, r1 = bump_pair(g, 0)
    *_, rep = solve_geodesic(r0, r1, 0.8, g, SolveConfig(tol_gap=1e-9))
    assert rep.W2 == pytest.approx(0.013996736610300972, rel=1e-4)


def test_sweep_endpoints_and_ordering():
    g = TorusGrid(1, 64, 32)
    r0, r1 = bump_pair(g, 0)
    rows = sweep_alpha(r0, r1, g, [0.0, 0.5, 1.0])
    assert [r["alpha"] for r in rows] == [0.0, 0.5, 1.0]
    for r in (rows[0], rows[2]):
        assert r["W2"] == pytest.approx(r["oracle"], rel=1e-2)
    assert np.isnan(rows[1]["oracle"])
    with pytest.raises(ConfigurationError):
        sweep_alpha(r0, r1, g, [0.5, 0.0])


def test_sweep_equal_marginals():
    g = TorusGrid(1, 16, 4)
    r = random_density(g, 3)
    rows = sweep_alpha(r, r, g, [0.0, 0.3, 0.9])
    assert all(row["W2"] <= 1e-8 for row in rows)


def test_sweep_records_errors_and_continues():
    g = TorusGrid(1, 16, 4)
    r0, r1 = bump_pair(g, 0)
    rows = sweep_alpha(r0, r1, g, [0.2, 0.4], SolveConfig(max_iter=1, check_every=1, tau=1e30))
    assert len(rows) == 2


def test_two_dimensional_small_solve():
    g = TorusGrid(2, 16, 8)
    r0, r1 = bump_pair(g, 0)
    rho, w, phi, rep = solve_geodesic(r0, r1, 0.8, g, SolveConfig(tol_gap=1e-3))
    assert rep.converged and rep.gap <= 1e-3
    assert np.abs(continuity_residual(rho, w, g)).max() <= 1e-8


def test_deterministic():
    g = TorusGrid(1, 16, 8)
    r0, r1 = bump_pair(g, 1)
    a = solve_geodesic(r0, r1, 0.6, g)
    b = solve_geodesic(r0, r1, 0.6, g)
    assert a[3].W2 == b[3].W2
    np.testing.assert_array_equal(a[2], b[2])


@pytest.mark.parametrize("alpha", [0.0, 0.8, 1.0])
def test_potential_nonincreasing_in_time(alpha):
    *_, phi, rep = cached_solve(alpha)
    assert np.diff(phi, axis=0).max() <= 1e-9
