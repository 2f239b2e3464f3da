import numpy as np
import pytest
from hypothesis import given, strategies as st

from walpha.curves import (
    CurveConfig,
    CurveEnsemble,
    CurveObjective,
    EndpointPenalty,
    K_eval,
    check_flux_identity,
    check_sigma_relation,
    check_variational_inequality,
    finite_difference_gradient,
    initial_ensemble,
    marginal_w1_1d,
    perturb_interior,
    sigma_eta,
    solve_curves,
    tail_fractions,
    total_action,
    trig_test_fields,
)
from walpha.errors import ConfigurationError, NumericalError
from walpha.fixtures import bump_pair, random_density
from walpha.grid import TorusGrid
from walpha.solver import solve_geodesic


def line(start, v, M, d=1):
    s = np.linspace(0, 1, M + 1)[:, None]
    return np.asarray(start, float)[None] + s * np.asarray(v, float)[None]


def test_ensemble_validation():
    with pytest.raises(ConfigurationError):
        CurveEnsemble(np.zeros((2, 3, 1)), np.array([0.5, 0.6]))
    with pytest.raises(ConfigurationError):
        CurveEnsemble(np.zeros((2, 3)), np.array([0.5, 0.5]))
    with pytest.raises(ConfigurationError):
        CurveConfig(N=0)


def test_constant_curves_have_zero_sigma():
    g = TorusGrid(1, 16, 8)
    eta = CurveEnsemble(np.full((5, 5, 1), 0.1), np.full(5, 0.2))
    assert np.all(sigma_eta(eta, g, 0.7) == 0)
    assert K_eval(eta, g, 0.7) == 0.0


@pytest.mark.parametrize("d", [1, 2])
@given(v=st.floats(-2.0, 2.0), alpha=st.floats(0.05, 0.95))
def test_single_curve_total_action(d, v, alpha):
    g = TorusGrid(d, 8, 4)
    vel = np.full(d, v) / np.sqrt(d)
    eta = CurveEnsemble(line(np.full(d, 0.05), vel, 6, d)[None], np.ones(1))
    total = sigma_eta(eta, g, alpha).sum() * g.cell_volume * g.dt
    assert total == pytest.approx(abs(v) ** (2 / (2 - alpha)), rel=1e-12, abs=1e-14)


def test_sigma_affine_in_eta():
    g = TorusGrid(1, 16, 8)
    rng = np.random.default_rng(0)
    a = CurveEnsemble(rng.uniform(-1, 1, (7, 5, 1)), np.full(7, 1 / 7))
    b = CurveEnsemble(rng.uniform(-1, 1, (4, 5, 1)), np.full(4, 1 / 4))
    mix = CurveEnsemble(np.concatenate([a.positions, b.positions]),
                        np.concatenate([a.weights, b.weights]) / 2)
    s_mix = sigma_eta(mix, g, 0.6)
    np.testing.assert_allclose(s_mix, 0.5 * (sigma_eta(a, g, 0.6) + sigma_eta(b, g, 0.6)), rtol=1e-12, atol=1e-14)
    assert K_eval(mix, g, 0.6) <= 0.5 * (K_eval(a, g, 0.6) + K_eval(b, g, 0.6)) + 1e-9
    # one curve at a time
    parts = sum(sigma_eta(CurveEnsemble(a.positions[i:i + 1], np.ones(1)), g, 0.6) * a.weights[i] for i in range(a.N))
    np.testing.assert_allclose(parts, sigma_eta(a, g, 0.6), rtol=1e-12, atol=1e-14)


def test_total_action_conservation():
    g = TorusGrid(2, 8, 4)
    rng = np.random.default_rng(1)
    eta = CurveEnsemble(rng.uniform(-2, 2, (10, 7, 2)), rng.dirichlet(np.ones(10)))
    dep = sigma_eta(eta, g, 0.4).sum() * g.cell_volume * g.dt
    assert dep == pytest.approx(total_action(eta, 0.4), rel=1e-12)


def test_unit_speed_K_pinned():
    g = TorusGrid(1, 64, 32)
    eta = CurveEnsemble(line([0.0], [1.0], 32)[None], np.ones(1))
    K = K_eval(eta, g, 0.5)
    # the deposit spreads over two cells: sigma ~ 1/(2h), K ~ (2h)^(alpha-1); golden value
    assert K == pytest.approx(5.656854249492381, rel=1e-9)


@pytest.mark.parametrize("d", [1, 2])
def test_analytic_gradient_matches_fd(d):
    g = TorusGrid(d, 8, 4)
    rng = np.random.default_rng(2)
    r0, r1 = random_density(g, 3), random_density(g, 4)
    eta = initial_ensemble(r0, r1, g, 6, 4, seed=1)
    pos = eta.positions + 0.01 * rng.standard_normal(eta.positions.shape)
    obj = CurveObjective(g, 0.7, 4, eta.weights, EndpointPenalty(g, r0, r1))
    obj.lam = 10.0
    x = pos.ravel()
    _, grad = obj(x)
    fd = finite_difference_gradient(obj, x, eps=1e-6)
    assert np.abs(grad - fd).max() <= 1e-6 * max(1.0, np.abs(fd).max())


def test_csv_roundtrip():
    rng = np.random.default_rng(3)
    eta = CurveEnsemble(rng.standard_normal((4, 3, 2)), rng.dirichlet(np.ones(4)))
    back = CurveEnsemble.from_csv(eta.to_csv())
    np.testing.assert_array_equal(back.positions, eta.positions)
    np.testing.assert_array_equal(back.weights, eta.weights)
    assert eta.to_csv().splitlines()[0] == "particle_id,time_index,x0,x1,weight"


def test_initial_ensemble_marginals():
    g = TorusGrid(1, 64, 32)
    r0, r1 = bump_pair(g, 0)
    eta = initial_ensemble(r0, r1, g, 2000, 16)
    assert marginal_w1_1d(eta, r0, 0, g) <= 1e-3
    assert marginal_w1_1d(eta, r1, 1, g) <= 1e-3
    g2 = TorusGrid(2, 16, 8)
    a, b = bump_pair(g2, 0)
    eta2 = initial_ensemble(a, b, g2, 200, 4, seed=5)
    assert eta2.positions.shape == (200, 5, 2)
    np.testing.assert_array_equal(eta2.positions, initial_ensemble(a, b, g2, 200, 4, seed=5).positions)


def test_equal_marginals_static_curves():
    g = TorusGrid(1, 32, 16)
    r = random_density(g, 7)
    eta, K = solve_curves(r, r, 0.6, g, CurveConfig(N=300, M=8))
    assert K == 0.0
    w = np.zeros(g.flux_shape)
    rho = np.broadcast_to(r, g.density_shape)
    assert check_flux_identity(eta, w, trig_test_fields(g), g) == 0.0
    assert check_sigma_relation(eta, rho, w, 0.6, g) == 0.0


@pytest.fixture(scope="module")
def coarse_pair():
    g = TorusGrid(1, 32, 16)
    r0, r1 = bump_pair(g, 0)
    eta, K = solve_curves(r0, r1, 0.8, g, CurveConfig(N=500, M=8))
    rho, w, phi, rep = solve_geodesic(r0, r1, 0.8, g)
    return g, r0, r1, eta, K, rho, w, rep


def test_coarse_solve_agrees_with_grid(coarse_pair):
    g, r0, r1, eta, K, rho, w, rep = coarse_pair
    assert K == pytest.approx(rep.W2, rel=0.05)
    assert marginal_w1_1d(eta, r0, 0, g) <= 2e-2
    assert marginal_w1_1d(eta, r1, 1, g) <= 2e-2
    assert check_sigma_relation(eta, rho, w, 0.8, g) <= 0.2
    assert check_flux_identity(eta, w, trig_test_fields(g), g) <= 0.1


def test_variational_inequality_power(coarse_pair):
    g, r0, r1, eta, K, *_ = coarse_pair
    assert check_variational_inequality(eta, eta, g, 0.8) == 0.0
    rng = np.random.default_rng(0)
    vals = [check_variational_inequality(eta, perturb_interior(eta, 0.005, rng), g, 0.8) for _ in range(5)]
    assert min(vals) >= -1e-3 * K
    bad = perturb_interior(eta, 0.05, rng)
    assert check_variational_inequality(bad, eta, g, 0.8) < 0


def test_perturbation_keeps_endpoints():
    rng = np.random.default_rng(0)
    eta = CurveEnsemble(rng.standard_normal((3, 5, 1)), np.full(3, 1 / 3))
    p = perturb_interior(eta, 0.1, 1)
    np.testing.assert_allclose(p.endpoint(0), eta.endpoint(0), atol=1e-15)
    np.testing.assert_allclose(p.endpoint(1), eta.endpoint(1), atol=1e-15)


def test_tail_fractions_bounded(coarse_pair):
    g, r0, r1, eta, K, *_ = coarse_pair
    for R, frac, bound in tail_fractions(eta, 0.8, K):
        assert frac <= bound


def test_nonconvergence_raises_with_ensemble():
    g = TorusGrid(1, 16, 8)
    r0, r1 = bump_pair(g, 1)
    with pytest.raises(NumericalError) as exc:
        solve_curves(r0, r1, 0.8, g, CurveConfig(N=100, M=4, lambdas=(1e-3,), max_iter=2, tol_marginal=1e-9))
    assert isinstance(exc.value.diagnostics["ensemble"], CurveEnsemble)
    assert exc.value.diagnostics["mismatch"] > 1e-9


def test_flux_identity_zero_field():
    g = TorusGrid(1, 16, 8)
    eta = CurveEnsemble(np.random.default_rng(0).standard_normal((5, 5, 1)), np.full(5, 0.2))
    zero = lambda t, x: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(x)[:-1]) + (1,))  # noqa: E731
    assert check_flux_identity(eta, np.zeros(g.flux_shape), [zero], g) == 0.0
