import numpy as np
import pytest
from scipy.special import kolmogi

from markov_approx.sampling import (
    RngStream,
    d_alpha_constant,
    empirical_cf,
    gaussian_sample,
    gaussian_vector,
    pareto_radius,
    pareto_sample,
    sphere_surface_area,
    stable_constants,
    stable_sample,
    stable_vector,
)
from markov_approx.sampling import _one_sided_stable


def test_sphere_area_d1_is_two():
    assert sphere_surface_area(1) == pytest.approx(2.0, abs=1e-14)


def test_sphere_area_matches_mpmath():
    mp = pytest.importorskip("mpmath")
    for d in (1, 2, 3, 5):
        expected = float(2 * mp.pi ** (d / 2) / mp.gamma(d / 2))
        assert sphere_surface_area(d) == pytest.approx(expected, rel=1e-13)


def test_d_alpha_boundary_reference_value():
    # alpha = 1, d = 1 evaluates to 2/pi (outside the sampling range,
    # kept as a formula reference point)
    assert d_alpha_constant(1.0, 1) == pytest.approx(2.0 / np.pi, rel=1e-13)


def test_d_alpha_against_independent_gamma_oracle():
    mp = pytest.importorskip("mpmath")
    for alpha, d in ((1.5, 2), (1.2, 1), (1.8, 3)):
        oracle = float(
            alpha
            * mp.mpf(2) ** alpha
            * mp.gamma((d + alpha) / 2)
            / (mp.gamma(mp.mpf(d) / 2) * mp.gamma((2 - alpha) / 2))
        )
        assert d_alpha_constant(alpha, d) == pytest.approx(oracle, abs=1e-10)


def test_stable_constants_fields_and_relations():
    p = stable_constants(1.5, 2)
    assert p.alpha == 1.5 and p.dim == 2
    assert p.sphere_area == pytest.approx(2 * np.pi, rel=1e-13)
    assert p.d_alpha == pytest.approx(d_alpha_constant(1.5, 2), rel=1e-14)
    # jump-intensity matching scale (see decisions on the closed-form constant)
    assert p.sigma == pytest.approx((1.5 / p.d_alpha) ** (1 / 1.5), rel=1e-14)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 0.5, 2.5])
def test_stable_constants_rejects_alpha_outside_range(alpha):
    with pytest.raises(ValueError):
        stable_constants(alpha, 1)


def test_stable_constants_rejects_bad_dim():
    with pytest.raises(ValueError):
        stable_constants(1.5, 0)


def test_gaussian_rejects_zero_dim():
    with pytest.raises(ValueError):
        gaussian_vector(RngStream(0), 0)


def test_gaussian_shape():
    v = gaussian_vector(RngStream(0), 3)
    assert v.shape == (3,)


def test_gaussian_mean_and_variance_large_sample():
    m = 1_000_000
    draws = gaussian_sample(RngStream(1), m, 1)[:, 0]
    assert abs(draws.mean()) <= 4.0 / np.sqrt(m)
    # chi-square interval at this sample size is ~.004 wide; 0.01 is generous
    assert abs(draws.var() - 1.0) <= 0.01


def test_streams_reproducible_and_independent():
    a = gaussian_sample(RngStream(7, 3), 100, 2)
    b = gaussian_sample(RngStream(7, 3), 100, 2)
    c = gaussian_sample(RngStream(7, 4), 100, 2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    s = RngStream(7, 3)
    assert s.substream(0).stream_id != s.substream(1).stream_id


def test_one_sided_stable_laplace_transform():
    # oracle for the CMS calibration: E exp(-u S) = exp(-u^a)
    gen = RngStream(11).generator
    for a in (0.6, 0.75, 0.9):
        s = _one_sided_stable(gen, a, 400_000)
        for u in (0.5, 1.0, 2.0):
            emp = np.exp(-u * s).mean()
            assert emp == pytest.approx(np.exp(-(u**a)), abs=4.0 / np.sqrt(400_000))


def test_stable_cf_at_zero_is_one():
    p = stable_constants(1.5, 2)
    draws = stable_sample(RngStream(2), p, 1000)
    assert empirical_cf(draws, np.zeros(2)) == 1.0


def test_stable_cf_d1():
    p = stable_constants(1.5, 1)
    m = 1_000_000
    draws = stable_sample(RngStream(3), p, m)
    assert empirical_cf(draws, np.array([1.0])) == pytest.approx(np.exp(-1.0), abs=0.005)


def test_stable_cf_d2():
    p = stable_constants(1.5, 2)
    m = 1_000_000
    draws = stable_sample(RngStream(4), p, m)
    lam = np.array([2.0, 0.0])
    assert empirical_cf(draws, lam) == pytest.approx(
        np.exp(-(2.0**1.5)), abs=3.0 / np.sqrt(m)
    )


@pytest.mark.parametrize("alpha,dim", [(1.2, 1), (1.8, 2)])
def test_stable_cf_grid_property(alpha, dim):
    m = 100_000
    p = stable_constants(alpha, dim)
    draws = stable_sample(RngStream(5), p, m)
    direction = np.zeros(dim)
    direction[0] = 1.0
    for norm in (0.5, 1.0, 2.0):
        emp = empirical_cf(draws, norm * direction)
        assert abs(emp - np.exp(-(norm**alpha))) <= 3.0 / np.sqrt(m)


def test_pareto_support_strict():
    p = stable_constants(1.5, 2)
    draws = pareto_sample(RngStream(6), p, 100_000)
    assert np.all(np.linalg.norm(draws, axis=1) > 1.0)


def test_pareto_radius_inverse_cdf_hand_value():
    # u = 0.25 at tail exponent 2 forces radius exactly 2
    assert pareto_radius(0.25, 2.0) == pytest.approx(2.0, abs=1e-15)


def test_pareto_tail_probability():
    p = stable_constants(1.5, 1)
    m = 1_000_000
    r = np.linalg.norm(pareto_sample(RngStream(7), p, m), axis=1)
    assert np.mean(r > 2.0) == pytest.approx(2.0**-1.5, abs=0.002)


def test_pareto_radius_ks_at_one_percent():
    p = stable_constants(1.5, 1)
    m = 100_000
    r = np.sort(np.linalg.norm(pareto_sample(RngStream(8), p, m), axis=1))
    model = 1.0 - r**-1.5
    ecdf_hi = np.arange(1, m + 1) / m
    ks = np.maximum(np.abs(ecdf_hi - model), np.abs(ecdf_hi - 1.0 / m - model)).max()
    assert ks <= kolmogi(0.01) / np.sqrt(m)


def test_pareto_direction_is_centered():
    p = stable_constants(1.5, 2)
    m = 100_000
    draws = pareto_sample(RngStream(9), p, m)
    dirs = draws / np.linalg.norm(draws, axis=1, keepdims=True)
    assert np.linalg.norm(dirs.mean(axis=0)) <= 4.0 * np.sqrt(p.dim / m)


def test_stable_vector_shape():
    p = stable_constants(1.2, 3)
    assert stable_vector(RngStream(10), p).shape == (3,)
