import numpy as np
import pytest
from scipy.special import gammaln

from markov_approx.sampling import RngStream
from markov_approx.sgd_diffusion import (
    SgdConfig,
    admissible_eta,
    check_assumptions,
    check_semigroup_contraction,
    claimed_constants,
    exact_sde_endpoints,
    grad_potential,
    grad_psi,
    lipschitz_test_functions,
    moment_audit,
    random_curvature_from_hessian,
    random_curvature_model,
    sde_step,
    sgd_endpoints,
    sgd_step,
    shifted_data_model,
    sigma_sqrt,
    simulate_pair_marginals,
)

H12 = np.diag([1.0, 2.0])


@pytest.fixture
def model1():
    return shifted_data_model(H12)


@pytest.fixture
def model2():
    return random_curvature_from_hessian(np.array([[2.0, 0.5], [0.5, 1.0]]), 0.5)


# --- gradients ---------------------------------------------------------------


def test_grad_vanishes_when_data_equals_state(model1):
    x = np.array([0.7, -1.1])
    assert np.allclose(grad_psi(model1, x, x), 0.0)


def test_grad_hand_value_1d():
    m = shifted_data_model(np.array([[2.0]]))
    out = grad_psi(m, np.array([1.0]), np.array([0.5]))
    assert out == pytest.approx(1.0, abs=1e-15)


def test_grad_noise_free_equals_mean_gradient(model2):
    x = np.array([0.4, -0.9])
    zero = np.zeros(2)
    noisefree = grad_psi(model2, x, (zero, zero))
    assert np.allclose(noisefree, grad_potential(model2, x), atol=1e-12)
    assert np.allclose(grad_potential(model2, x), model2.hessian @ x + 0.5 * x)


def test_grad_dimension_mismatch(model1):
    with pytest.raises(ValueError):
        grad_psi(model1, np.zeros(3), np.zeros(3))


# --- dynamics ----------------------------------------------------------------


def test_sgd_step_hand_value():
    # w - eta * H (w - zeta) with H = 1, eta = 0.1, w = 1, zeta = 0.5
    m = shifted_data_model(np.array([[1.0]]))
    w = np.array([1.0])
    zeta = np.array([0.5])
    stepped = w - 0.1 * grad_psi(m, w, zeta)
    assert stepped == pytest.approx(0.95, abs=1e-15)


def test_sgd_step_zero_eta_is_identity(model1):
    w = np.array([3.0, -2.0])
    assert np.array_equal(sgd_step(model1, 0.0, w, RngStream(0)), w)


def test_sgd_one_step_conditional_mean(model1):
    # E[w_1 | w_0] = (I - eta H) w_0
    eta, m = 0.1, 100_000
    w0 = np.array([1.0, -1.0])
    w1 = sgd_endpoints(model1, eta, 1, w0, m, RngStream(1))
    expected = (np.eye(2) - eta * H12) @ w0
    band = 4.0 * eta * np.diag(H12) / np.sqrt(m)
    assert np.all(np.abs(w1.mean(axis=0) - expected) <= band)


def test_sigma_sqrt_shifted_data_is_hessian(model1):
    for x in (np.zeros(2), np.array([5.0, -3.0])):
        assert np.array_equal(sigma_sqrt(model1, x), H12)


def test_sigma_sqrt_at_origin_is_gamma_identity(model2):
    assert np.allclose(sigma_sqrt(model2, np.zeros(2)), 0.5 * np.eye(2), atol=1e-14)


def test_sigma_sqrt_square_compare(model2):
    gen = RngStream(2).generator
    for _ in range(10):
        x = gen.standard_normal(2) * 2
        root = sigma_sqrt(model2, x)
        u = model2.basis.T @ x
        target = model2.basis @ np.diag(u**2 + 0.25) @ model2.basis.T
        assert np.max(np.abs(root @ root - target)) <= 1e-10
        assert np.allclose(root, root.T, atol=1e-12)
        assert np.linalg.eigvalsh(root)[0] >= 0.5 - 1e-12


def test_sde_step_zero_dt_is_identity(model1):
    x = np.array([1.0, 2.0])
    assert np.array_equal(sde_step(model1, 0.5, 0.0, x, RngStream(3)), x)


def test_sde_drift_only_matches_ode():
    # eta = 0 disables noise; 10^4 Euler steps of dx = -x dt from 1 to t = 1
    m = shifted_data_model(np.array([[1.0]]))
    x = np.array([1.0])
    dt = 1e-4
    for _ in range(10_000):
        x = sde_step(m, 0.0, dt, x, RngStream(4))
    assert x[0] == pytest.approx(np.exp(-1.0), abs=1e-3)


def test_fine_euler_matches_gaussian_closed_form(model1):
    # dual route: the Euler integrator vs the exact Gaussian marginal
    eta, t, m = 0.25, 1.0, 40_000
    dt = 1.0 / 256
    x = np.tile(np.array([1.0, 1.0]), (m, 1))
    stream = RngStream(5)
    for _ in range(int(t / dt)):
        x = sde_step(model1, eta, dt, x, stream)
    lam = np.diag(H12)
    mean = np.exp(-lam * t) * np.array([1.0, 1.0])
    var = eta / 2.0 * lam * (1.0 - np.exp(-2 * lam * t))
    # Euler bias O(dt) plus 4-sigma MC bands
    assert np.all(np.abs(x.mean(axis=0) - mean) <= 4 * np.sqrt(var / m) + 5 * dt)
    assert np.all(np.abs(x.var(axis=0) - var) <= 4 * var * np.sqrt(2.0 / m) + 5 * dt)
    exact = exact_sde_endpoints(model1, eta, t, np.array([1.0, 1.0]), m, RngStream(6))
    assert np.all(np.abs(exact.mean(axis=0) - mean) <= 4 * np.sqrt(var / m))
    assert np.all(
        np.abs(exact.var(axis=0) - var) <= 4 * var * np.sqrt(2.0 / m)
    )


def test_simulate_pair_shapes(model1):
    cfg = SgdConfig(eta=0.25, horizon_n=4, x0=[1.0, 1.0], n_paths=1)
    a, b = simulate_pair_marginals(model1, cfg, RngStream(7))
    assert a.points.shape == (1, 2) and b.points.shape == (1, 2)


def test_simulate_pair_means_agree():
    m = shifted_data_model(np.array([[1.0]]))
    cfg = SgdConfig(eta=1.0 / 64, horizon_n=64, x0=[2.0], n_paths=50_000)
    a, b = simulate_pair_marginals(m, cfg, RngStream(8))
    # both marginals center near exp(-T) x0 at T = 1; allow the O(eta) drift gap
    assert abs(a.points.mean() - b.points.mean()) <= 0.02
    assert a.points.mean() == pytest.approx(2 * np.exp(-1.0), abs=0.03)


def test_simulate_pair_deterministic(model1):
    cfg = SgdConfig(eta=0.25, horizon_n=4, x0=[1.0, 1.0], n_paths=100)
    a1, b1 = simulate_pair_marginals(model1, cfg, RngStream(9))
    a2, b2 = simulate_pair_marginals(model1, cfg, RngStream(9))
    assert np.array_equal(a1.points, a2.points)
    assert np.array_equal(b1.points, b2.points)


def test_euler_route_for_random_curvature(model2):
    cfg = SgdConfig(eta=0.25, horizon_n=2, x0=[0.5, 0.5], n_paths=64, sde_substeps=8)
    a, b = simulate_pair_marginals(model2, cfg, RngStream(10))
    assert b.points.shape == (64, 2)
    assert np.all(np.isfinite(b.points))


# --- constants and probes ----------------------------------------------------


def test_constants_shifted_data(model1):
    c = claimed_constants(model1)
    assert c.theta0 == pytest.approx(1.0)
    assert c.delta == pytest.approx(1.0)
    assert c.kappa == pytest.approx(np.sqrt(5.0))
    assert (c.theta1, c.theta2, c.theta3, c.theta4, c.theta5) == (0, 0, 0, 0, 0)
    # quadrature moments vs trace closed forms: E|Hz|^2 = tr H^2,
    # E|Hz|^4 = 2 tr H^4 + (tr H^2)^2
    assert c.ell0[1] == pytest.approx(5.0, rel=1e-10)
    assert c.ell0[3] == pytest.approx(2 * 17 + 25, rel=1e-10)


def test_constants_random_curvature(model2):
    c = claimed_constants(model2)
    lam_min = np.linalg.eigvalsh(model2.hessian)[0]
    assert c.theta0 == pytest.approx(lam_min + 0.5)
    assert c.delta == pytest.approx(0.5)
    hs = np.linalg.norm(model2.hessian, "fro")
    assert c.kappa == pytest.approx((27 * (hs**4 + 3 * 2**6 + 0.5**4)) ** 0.25)
    assert c.theta1 == 0 and c.theta2 == 0 and c.theta3 > 0
    # ell0_1 = gamma E|beta| with the Gamma-ratio norm moment
    e_abs = np.sqrt(2) * np.exp(gammaln(1.5) - gammaln(1.0))
    assert c.ell0[0] == pytest.approx(0.5 * e_abs, rel=1e-12)


def test_check_assumptions_passes_both(model1, model2):
    for model in (model1, model2):
        report = check_assumptions(model, 2000, RngStream(11))
        assert report.passed
        assert report.max_rel_violation <= 1e-8
        assert {c.name for c in report.checks} == {
            "dissipativity",
            "dissipativity_integrated",
            "ellipticity",
            "fourth_moment_lipschitz",
        }


def test_admissible_eta_formula():
    m = shifted_data_model(np.array([[1.0]]))
    c = claimed_constants(m)
    expected = c.theta0 / (2 * (10 + 7 * c.kappa**4 + 7 * c.ell0[3]))
    assert admissible_eta(m) == pytest.approx(min(1.0, expected))
    assert admissible_eta(m) == pytest.approx(1.0 / 76.0, rel=1e-9)


# --- audits ------------------------------------------------------------------


def test_moment_audit_frozen_chain():
    m = shifted_data_model(np.array([[1.0]]))
    cfg = SgdConfig(eta=0.0, horizon_n=50, x0=[1.5], n_paths=10)
    report = moment_audit(m, cfg, RngStream(12), record_every=10)
    assert not report.flagged
    assert np.allclose(report.estimates, 1.5**4)


def test_moment_audit_bounded_at_admissible_eta():
    m = shifted_data_model(np.array([[1.0]]))
    eta = admissible_eta(m) / 2
    cfg = SgdConfig(eta=eta, horizon_n=2000, x0=[0.0], n_paths=2000)
    report = moment_audit(m, cfg, RngStream(13))
    assert not report.flagged
    assert report.estimates.max() <= report.budget


def test_moment_audit_rejects_large_eta():
    m = shifted_data_model(np.array([[1.0]]))
    cfg = SgdConfig(eta=0.5, horizon_n=10, x0=[0.0], n_paths=10)
    with pytest.raises(ValueError):
        moment_audit(m, cfg, RngStream(14))


def test_sgd_gaussian_marginal_recursion_oracle(model1):
    # the shifted_data chain is the AR(1) recursion
    # w_k = (I - eta H) w_(k-1) + eta H zeta_k, so its marginal is Gaussian
    # with mean (I - eta H)^N x0 and a covariance recursion in closed form
    eta, n_steps, m = 0.125, 16, 200_000
    x0 = np.array([1.0, -2.0])
    w = sgd_endpoints(model1, eta, n_steps, x0, m, RngStream(20))
    lam = np.diag(H12)
    a = 1 - eta * lam
    mean = a**n_steps * x0
    var = (eta * lam) ** 2 * (1 - a ** (2 * n_steps)) / (1 - a**2)
    assert np.all(np.abs(w.mean(axis=0) - mean) <= 4 * np.sqrt(var / m))
    assert np.all(np.abs(w.var(axis=0) - var) <= 4 * var * np.sqrt(2.0 / m))
    # cross-coordinate independence is preserved by the diagonal Hessian
    assert abs(np.corrcoef(w.T)[0, 1]) <= 4 / np.sqrt(m)


def test_stationary_fourth_moment_ar1_oracle():
    # w_k = (1 - eta) w_{k-1} + eta zeta_k has stationary fourth moment
    # (6 a^2 b^2 m2 + 3 b^4) / (1 - a^4), m2 = b^2 / (1 - a^2)
    m = shifted_data_model(np.array([[1.0]]))
    eta = 0.25
    a, b = 1 - eta, eta
    m2 = b**2 / (1 - a**2)
    m4 = (6 * a**2 * b**2 * m2 + 3 * b**4) / (1 - a**4)
    w = sgd_endpoints(m, eta, 300, np.zeros(1), 200_000, RngStream(15))
    est = np.mean(w**4)
    sigma_est = np.sqrt((105 - 9) * m2**4 / 200_000)  # Gaussian eighth-moment bound
    assert est == pytest.approx(m4, abs=4 * sigma_est)


# --- contraction -------------------------------------------------------------


def test_contraction_constant_function_is_zero(model1):
    report = check_semigroup_contraction(
        model1, 1.0, lambda x: np.zeros(x.shape[:-1]), 1e-4, RngStream(16),
        n_probe=3, n_mc=500,
    )
    assert report.passed
    assert all(p.estimate == 0.0 for p in report.probes)


def test_contraction_matches_linear_closed_form(model1):
    # for the linear model and h = x_1 the quotient is |(exp(-Ht) v)_1| exactly
    t = 1.0
    report = check_semigroup_contraction(
        model1, t, "coord0", 1e-5, RngStream(17), n_probe=10, n_mc=2000
    )
    assert report.passed
    for p in report.probes:
        assert p.estimate <= np.exp(-1.0 * t) + 1e-3  # lambda_min = 1 dominates bound


def test_contraction_long_horizon(model1):
    report = check_semigroup_contraction(
        model1, 20.0, "norm", 1e-4, RngStream(18), n_probe=5, n_mc=2000
    )
    assert report.passed
    assert all(p.estimate <= p.bound + 5 * p.stderr for p in report.probes)


def test_contraction_euler_route(model2):
    report = check_semigroup_contraction(
        model2, 0.5, "coord1", 1e-4, RngStream(19), eta=0.125, n_probe=3, n_mc=2000
    )
    assert report.passed


def test_lipschitz_library_contents():
    funcs = lipschitz_test_functions(3)
    assert set(funcs) == {"coord0", "coord1", "coord2", "norm", "softplus0"}
    x = np.array([0.0, 0.0, 0.0])
    assert funcs["softplus0"](x) == pytest.approx(0.0)
    assert funcs["norm"](np.array([3.0, 4.0, 0.0])) == pytest.approx(5.0)


# --- model validation --------------------------------------------------------


def test_model_validation_errors():
    with pytest.raises(ValueError):
        shifted_data_model(np.array([[1.0, 0.2], [0.0, 1.0]]))  # asymmetric
    with pytest.raises(ValueError):
        shifted_data_model(np.array([[0.0]]))  # singular
    with pytest.raises(ValueError):
        random_curvature_model(np.eye(2) * 2, np.array([1.0, 1.0]), 0.5)
    with pytest.raises(ValueError):
        random_curvature_model(np.eye(2), np.array([1.0, 1.0]), 0.0)
