import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughshe.levy_kernel import (E_INV, AlphaParam, CorrelationModel, LaplaceExponent,
                                  LevyDensity, SubordinatorSampler, phi_asymptote,
                                  sample_subordinator_at_exponential_time, stehfest_weights)

# Laplace exponent by tanh-sinh quadrature of the defining t-integral (tests/oracles.py)
PHI_ORACLE = {
    1.1: {1e-3: 0.004144555850059309, 1.0: 4.020738881543745,
          100.0: 196.92568136623495, 1e9: 3143217.8461738215},
    1.5: {1e-3: 0.007238214922688322, 1.0: 7.078364476006463,
          100.0: 404.9396677698642, 1e9: 10630533.944328673},
    1.9: {1e-3: 0.01340068963464577, 1.0: 13.188756346432681,
          100.0: 858.1647373341129, 1e9: 36067225.07799821},
}
VARIATION_ORACLE = {1.1: 4.144687295005802, 1.5: 7.238383750241169, 1.9: 13.400912289597468}


@pytest.fixture(scope="module")
def model():
    return CorrelationModel(1.5)


def test_alpha_validation():
    with pytest.raises(ValueError):
        AlphaParam(1.0)
    with pytest.raises(ValueError):
        AlphaParam(float("nan"))
    assert AlphaParam(0.5, probe=True).alpha == 0.5
    with pytest.raises(ValueError):
        AlphaParam(2.5).require_rough_range()
    AlphaParam(1.5).require_rough_range()


def test_density_form_and_support():
    nu = LevyDensity(AlphaParam(1.5))
    r = np.array([1e-4, 0.1, 0.3])
    np.testing.assert_allclose(nu(r), np.log(1 / r) ** 1.5 * r ** -1.5, rtol=1e-14)
    assert np.all(nu(np.array([0.0, E_INV, 0.5, 2.0])) == 0)


@pytest.mark.parametrize("alpha", [1.1, 1.5, 1.9])
def test_variation_integral_matches_oracle(alpha):
    nu = LevyDensity(AlphaParam(alpha))
    assert nu.variation_integral() == pytest.approx(VARIATION_ORACLE[alpha], rel=1e-12)


@pytest.mark.parametrize("alpha", [1.1, 1.5, 1.9])
def test_phi_matches_direct_quadrature(alpha):
    phi = LaplaceExponent(alpha)
    for lam, ref in PHI_ORACLE[alpha].items():
        assert float(phi(lam)) == pytest.approx(ref, rel=1e-8)


def test_phi_basic_values():
    phi = LaplaceExponent(1.5)
    assert float(phi(0.0)) == 0.0
    assert float(phi(2.0)) > float(phi(1.0))
    r = float(phi(1e9)) / float(phi_asymptote(1e9, 1.5))
    assert 0.8 <= r <= 1.2
    with pytest.raises(ValueError):
        phi(-1.0)


def test_phi_scaled_route_agrees():
    phi = LaplaceExponent(1.5)
    lam = np.array([1e3, 1e7, 1e11])
    direct = phi(lam)
    scaled = np.sqrt(lam) * phi.scaled(np.log(lam))
    np.testing.assert_allclose(scaled, direct, rtol=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.floats(-4, 10), st.floats(0.05, 3), st.floats(0.05, 3))
def test_phi_bernstein_increasing_concave(log_lam, d1, d2):
    phi = LaplaceExponent(1.5)
    l1 = 10.0 ** log_lam
    l2, l3 = l1 * (1 + d1), l1 * (1 + d1) * (1 + d2)
    a, b, c = (float(v) for v in phi(np.array([l1, l2, l3])))
    assert a < b < c
    # concavity: the chord slopes decrease
    assert (c - b) / (l3 - l2) <= (b - a) / (l2 - l1) * (1 + 1e-7)


def test_stehfest_weights_exact():
    for order in (6, 12, 16):
        V = stehfest_weights(order)
        assert sum(V) == 0
        # inverting 1/s reproduces the constant 1 exactly
        assert sum(v / k for k, v in enumerate(V, start=1)) == Fraction(1)
    with pytest.raises(ValueError):
        stehfest_weights(7)


def test_potential_measure_invariants(model):
    pm = model.potential
    rep = pm.invariant_report()
    assert rep["nondecreasing"] and rep["mass_at_most_one"]
    assert rep["total_mass"] == pytest.approx(1.0, abs=1e-6)
    assert float(model.potential_cdf(1e3).value[0]) == pytest.approx(1.0, abs=1e-4)
    assert float(model.potential_cdf(1e-30).value[0]) < 1e-12
    gen = np.random.default_rng(1)
    x = 10.0 ** gen.uniform(-10, 1, 400)
    r = x * gen.uniform(0.01, 1.0, 400)
    assert np.max(pm.unimodality_excess(x, r)) <= 1e-6


def test_potential_cdf_rejects_nonpositive(model):
    with pytest.raises(ValueError):
        model.potential_cdf(0.0)
    with pytest.raises(ValueError):
        model.potential_cdf(1e-3, backend="guess")


def test_potential_small_eps_band(model):
    eps = np.geomspace(1e-6, 1e-2, 5)
    v = model.potential_cdf(eps).value
    r = v / (eps ** 0.5 * np.log(1 / eps) ** -1.5)
    g = math.exp(np.mean(np.log(r)))
    assert np.all((r >= g / 2) & (r <= 2 * g))


def test_subordinator_draws(model):
    s = SubordinatorSampler(1.5)
    a = s.sample(2000, seed=3)
    assert np.all(a > 0)
    np.testing.assert_array_equal(a, s.sample(2000, seed=3))
    assert not np.array_equal(a, s.sample(2000, seed=4))
    assert sample_subordinator_at_exponential_time(1.5, seed=3) > 0


def test_mc_cdf_at_support_edge_matches_inversion(model):
    mc = model.potential_cdf(E_INV, backend="monte-carlo")
    inv = model.potential_cdf(E_INV)
    assert abs(mc.value[0] - inv.value[0]) <= 3 * mc.stderr[0]


def test_mc_heat_kernel_matches_f(model):
    m, se = model.mc_mean_heat_kernel(0.3)
    f = model.f_eval(np.array([0.3, 0.0, 0.0]))
    assert abs(m[0] - f) <= 3 * se[0]


def test_f_positive_monotone_radial(model):
    assert model.f_eval(np.array([1.0, 0.0, 0.0])) > 0
    r = np.geomspace(model.trusted_radius, 30, 200)
    v = model.phi_profile(r)
    assert np.all(v > 0) and np.all(np.diff(v) <= 0)
    x = np.array([0.3, -0.4, 1.2])
    perm = np.array([1.2, 0.3, 0.4])
    assert model.f_eval(x) == model.f_eval(perm)


def test_f_resolution_floor(model):
    with pytest.raises(ValueError, match="smallest trusted radius"):
        model.phi_profile(model.trusted_radius / 10)
    with pytest.raises(ValueError):
        model.f_eval(np.zeros(3))


def test_f_small_radius_band(model):
    r = np.geomspace(1e-5, 1e-1, 9)
    v = model.phi_profile(r) * r ** 2 * np.log(1 / r) ** 1.5
    assert v.max() / v.min() <= 4


def test_fhat_composition_and_range(model):
    assert float(model.fhat_eval(np.zeros(3))) == 1.0
    z = np.array([[3.0, 4.0, 0.0], [100.0, 0.0, 0.0]])
    exact = 1.0 / (1.0 + model.phi(0.5 * np.sum(z * z, axis=-1)))
    np.testing.assert_array_equal(model.fhat_eval(z), exact)
    ray = np.geomspace(1e-3, 1e8, 60)[:, None] * np.array([0.6, 0.0, 0.8])
    v = model.fhat_eval(ray)
    assert np.all((v > 0) & (v <= 1)) and np.all(np.diff(v) < 0)
    zz = np.geomspace(10, 1e6, 11)
    b = model.fhat_radial(zz) * zz * np.log(zz) ** 1.5
    assert b.max() / b.min() <= 4


def test_fhat_table_matches_direct(model):
    r = np.geomspace(1e-3, 1e7, 25)
    np.testing.assert_allclose(model.fhat_profile(r), model.fhat_radial(r), rtol=1e-8)


def test_dalang(model):
    R = 1e4
    v1, v2 = model.dalang_integral([R, 2 * R])
    assert (v2 - v1) / v1 < 0.01
    assert model.dalang_check()["admissible"]
    probe = CorrelationModel(0.5, probe=True)
    assert not probe.dalang_check()["admissible"]


def test_heat_convolution(model):
    t = np.geomspace(1e-6, 1e-2, 5)
    v = model.heat_convolution_at_zero(t)
    assert np.all(v > 0) and np.all(np.diff(v) < 0)
    b = v * t * np.log(1 / t) ** 1.5
    assert b.max() / b.min() <= 4
    phys = model.heat_convolution_physical(t[[1, 3]])
    np.testing.assert_allclose(phys, v[[1, 3]], rtol=1e-2)


def test_resolvent(model):
    lam = np.array([math.e, 10.0, 1e3, 1e6, 1e8])
    v = model.resolvent_at_zero(lam)
    assert np.all(np.isfinite(v)) and np.all(np.diff(v) < 0)
    np.testing.assert_allclose(model.resolvent_fourier(lam), v, rtol=1e-3)
    b = v[1:] * np.log(lam[1:]) ** 0.5
    assert b.max() / b.min() <= 4
    with pytest.raises(ValueError):
        model.resolvent_at_zero(2.0)
