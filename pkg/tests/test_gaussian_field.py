import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughshe.gaussian_field import (AliasingWarning, LatticeSpec, ZField, canonical_distance,
                                     covariance_pair, covariance_table, dense_covariance,
                                     dense_sampler, distance_sq, dudley_bound_estimate,
                                     field_weights, lattice_max_scan, sample_field,
                                     sandwich_quantity, spectral_density, sublattice_entropy,
                                     variance_Z)
from roughshe.levy_kernel import CorrelationModel

# QUADPACK / mpmath values of the continuum variance (tests/oracles.py)
VARIANCE_ORACLE = {0.1: 0.01600269964966414, 1.0: 0.02602941910951443}


@pytest.fixture(scope="module")
def model():
    return CorrelationModel(1.5)


def test_lattice_spec():
    s = LatticeSpec(16, 2.0)
    assert s.h == 0.125 and s.shape == (16, 16, 16)
    assert LatticeSpec(8, 1.0, "2d").shape == (8, 8)
    for bad in (12, 1, 0):
        with pytest.raises(ValueError):
            LatticeSpec(bad)
    with pytest.raises(ValueError):
        LatticeSpec(8, -1.0)


def test_rough_range_required():
    with pytest.raises(ValueError):
        ZField(CorrelationModel(2.5), 1.0, LatticeSpec(8))


def test_spectral_density(model):
    t = 0.7
    assert spectral_density(model, t, np.array([0.0]))[0] == pytest.approx(t * (2 * math.pi) ** -3)
    k = np.geomspace(1e-6, 1e6, 50)
    g = spectral_density(model, t, k)
    assert np.all(g >= 0)
    # continuous at the origin
    assert g[0] == pytest.approx(t * (2 * math.pi) ** -3, rel=1e-6)


@pytest.mark.parametrize("t", [0.1, 1.0])
def test_continuum_variance_oracle(model, t):
    ref = VARIANCE_ORACLE[t]
    assert variance_Z(model, t) == pytest.approx(ref, rel=1e-6)


def test_lattice_variance_grows_like_one_plus_t(model):
    spec = LatticeSpec(16)
    v = np.array([field_weights(model, spec, t).sum() for t in (1.0, 10.0, 100.0)])
    assert np.all(np.diff(v) > 0)
    r = v / (1 + np.array([1.0, 10.0, 100.0]))
    assert r.max() / r.min() <= 4


def test_sampler_determinism_and_variance(model):
    spec = LatticeSpec(8)
    a = sample_field(model, spec, 1.0, seed=5, replica=3)
    b = sample_field(model, spec, 1.0, seed=5, replica=3)
    c = sample_field(model, spec, 1.0, seed=6, replica=3)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    zf = ZField(model, 1.0, spec)
    gen = np.random.default_rng(0)
    vals = np.concatenate([np.stack(zf.sample_pair(gen)) for _ in range(500)])
    site = vals[:, 0, 0, 0]
    se = site.std() / math.sqrt(site.size)
    assert abs(site.mean()) <= 4 * se
    assert site.var() == pytest.approx(zf.variance, rel=0.15)
    assert zf.covariance.flat[0] == pytest.approx(zf.variance, rel=1e-12)


def test_dense_oracle_consistent(model):
    spec = LatticeSpec(4)
    w = field_weights(model, spec, 1.0)
    cov = dense_covariance(w)
    assert np.allclose(cov, cov.T)
    root = dense_sampler(cov)
    np.testing.assert_allclose(root @ root, cov, atol=1e-12)
    np.testing.assert_allclose(cov[0].reshape(4, 4, 4), covariance_table(w), atol=1e-15)


def test_lattice_covariance_pair(model):
    spec = LatticeSpec(8)
    C = covariance_table(field_weights(model, spec, 1.0))
    assert covariance_pair(model, 1.0, [1, 2, 3], [0, 0, 0], lattice=spec)[0] == C[1, 2, 3]
    assert covariance_pair(model, 1.0, [0, 0, 0], [1, 2, 3], lattice=spec)[0] == \
        pytest.approx(C[1, 2, 3], rel=1e-12)


def test_aliasing_warning(model):
    with pytest.warns(AliasingWarning):
        ZField(model, 1.0, LatticeSpec(2), alias_fraction=0.01)
    with warnings.catch_warnings():
        warnings.simplefilter("error", AliasingWarning)
        ZField(model, 1.0, LatticeSpec(8), alias_fraction=1.0)


def test_continuum_covariance_and_distance(model):
    x = np.array([0.1, 0.2, 0.3])
    y = np.array([0.15, 0.2, 0.3])
    v = variance_Z(model, 1.0)
    assert covariance_pair(model, 1.0, x, x) == pytest.approx(v, rel=1e-12)
    assert covariance_pair(model, 1.0, x, y) == pytest.approx(
        float(covariance_pair(model, 1.0, y, x)), rel=1e-14)
    assert variance_Z(model, 2.0) > variance_Z(model, 1.0)
    assert canonical_distance(model, 1.0, x, x) == 0
    a = np.array([0.4, -1.0, 7.0])
    assert canonical_distance(model, 1.0, x + a, y + a) == pytest.approx(
        float(canonical_distance(model, 1.0, x, y)), rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(1e-5, 0.3), st.floats(1e-5, 0.3), st.floats(0, math.pi))
def test_triangle_inequality(r1, r2, angle):
    model = CorrelationModel(1.5)
    p = np.zeros(3)
    q = np.array([r1, 0.0, 0.0])
    s = np.array([r1 + r2 * math.cos(angle), r2 * math.sin(angle), 0.0])
    d = lambda a, b: float(canonical_distance(model, 1.0, a, b))  # noqa: E731
    assert d(p, s) <= d(p, q) + d(q, s) + 1e-9


def test_metric_band_and_sandwich(model):
    rho = np.geomspace(1e-6, 1e-2, 5)
    d2 = distance_sq(model, 1.0, rho)
    b = d2 * np.log(1 / rho) ** 0.5
    assert b.max() / b.min() <= 4
    T = sandwich_quantity(model, rho)
    assert np.all(d2 >= (1 - math.exp(-0.5)) * T) and np.all(d2 <= math.exp(0.5) * T)


def test_max_scan_monotone_and_single_point(model):
    scan = lattice_max_scan(model, 1.0, [1, 2, 4, 8], replicas=400, seed=1)
    assert np.all(np.diff(scan.maxima, axis=1) >= 0)
    assert scan.monotone_within_ci()
    # one site: E|Z| of a centred Gaussian is sqrt(2 Var / pi)
    r0 = scan.rows[0]
    ref = math.sqrt(2 * scan.variance / math.pi)
    assert r0.ci_low - 0.01 * ref <= ref <= r0.ci_high + 0.01 * ref
    assert not scan.flagged
    assert lattice_max_scan(model, 1.0, [1, 2], replicas=10).flagged
    with pytest.raises(ValueError):
        lattice_max_scan(model, 1.0, [4, 2], replicas=4)


def test_entropy_integrals(model):
    assert dudley_bound_estimate(np.zeros((1, 3)), lambda p, Q: np.zeros(len(Q)))[0] == 0.0
    metric = lambda p, Q: np.sqrt(((Q - p) ** 2).sum(axis=1))  # noqa: E731
    pts = np.random.default_rng(0).uniform(size=(30, 2))
    base = dudley_bound_estimate(pts, metric)[0]
    doubled = dudley_bound_estimate(np.vstack([pts, pts + 5.0]), metric)[0]
    assert doubled > base
    zf = ZField(model, 1.0, LatticeSpec(16))
    e4, dim = sublattice_entropy(zf, 4)
    e8, _ = sublattice_entropy(zf, 8)
    assert dim == 3 and 0 < e4 < e8
