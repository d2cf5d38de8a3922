import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughshe.gaussian_field import LatticeSpec, noise_weights
from roughshe.levy_kernel import CorrelationModel
from roughshe.spde_solver import (BlowupError, Integrator, SigmaSpec, SolverConfig, beta_gamma,
                                  linearization_residual, noise_increment, pam_second_moment,
                                  run, scheme_field_weights, step)

SPEC = LatticeSpec(8)


@pytest.fixture(scope="module")
def model():
    return CorrelationModel(1.5)


def cfg(sigma, T=0.02, dt=4e-3, replicas=2, **kw):
    return SolverConfig(SPEC, dt, T, SigmaSpec.parse(sigma), replicas=replicas, **kw)


def test_sigma_parse_and_properties():
    assert SigmaSpec.parse("clip:2") == SigmaSpec("clip", 2.0)
    assert str(SigmaSpec.parse("tanh:1")) == "tanh:1"
    assert SigmaSpec.parse("id").sigma0 == math.inf
    assert SigmaSpec.parse("const:3").sigma0 == 3.0 and SigmaSpec.parse("const:3").lipschitz == 0
    assert SigmaSpec.parse("const:1").strictly_positive
    assert not SigmaSpec.parse("clip:1").strictly_positive
    assert SigmaSpec.parse("tanh:2").bounded and not SigmaSpec.parse("id").bounded
    for bad in ("id:2", "clip", "clip:-1", "square:1", "tanh:0"):
        with pytest.raises(ValueError):
            SigmaSpec.parse(bad)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["clip:2", "tanh:1", "id", "const:1.5"]),
       st.floats(-50, 50), st.floats(-50, 50))
def test_sigma_lipschitz_and_bound(text, a, b):
    s = SigmaSpec.parse(text)
    x = np.array([a, b])
    y = s(x)
    assert abs(y[0] - y[1]) <= s.lipschitz * abs(a - b) + 1e-12
    assert np.all(np.abs(y) <= s.sigma0 + 1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        cfg("id", dt=0.0)
    with pytest.raises(ValueError):
        cfg("id", T=-1.0)
    with pytest.raises(ValueError):
        cfg("id", batch=3)
    with pytest.raises(ValueError):
        cfg("id", snapshots=(0.011,)).snapshot_steps()
    c = cfg("id", dt=(1 / 8) ** 2 / 2)
    assert c.stability_ok and not cfg("id", dt=0.1).stability_ok


def test_zero_steps_returns_initial_condition(model):
    tr = run(model, cfg("id", T=0.0, snapshots=(0.0,)))
    assert np.all(tr.u[0] == 1.0)


def test_const_zero_preserves_one(model):
    tr = run(model, cfg("const:0", snapshots=(0.02,)))
    assert np.all(tr.u[0] == 1.0)


def test_const_one_coupled_is_bitwise_z(model):
    seen = []

    def obs(n, t, u, z, reps):
        seen.append(np.array_equal(u, z))

    tr = run(model, cfg("const:1", coupled=True, snapshots=(0.008, 0.02)), observer=obs)
    assert all(seen) and len(seen) == 6
    for u, z in zip(tr.u, tr.z):
        np.testing.assert_array_equal(u, z)


def test_runs_are_reproducible_and_batch_independent(model):
    a = run(model, cfg("tanh:1", replicas=4, snapshots=(0.02,), seed=9))
    b = run(model, cfg("tanh:1", replicas=4, snapshots=(0.02,), seed=9, batch=4))
    c = run(model, cfg("tanh:1", replicas=4, snapshots=(0.02,), seed=10))
    np.testing.assert_array_equal(a.u[0], b.u[0])
    assert not np.array_equal(a.u[0], c.u[0])
    assert a.noise_ledger["pairs"] == 2


def test_noise_increment_moments(model):
    dt = 1e-3
    w = noise_weights(model, SPEC, dt)
    integ = Integrator(model, SPEC, dt)
    assert integ.noise_var == pytest.approx(w.sum(), rel=1e-12)
    a = noise_increment(model, SPEC, dt, seed=1, step=0)
    b = noise_increment(model, SPEC, dt, seed=1, step=0)
    np.testing.assert_array_equal(a.values, b.values)
    draws = np.concatenate([integ.noise_pairs(1, [0, 1, 2, 3], s) for s in range(100)])
    x = draws.reshape(draws.shape[0], -1)
    var = x.var(axis=0).mean()
    assert var == pytest.approx(w.sum(), rel=0.1)
    assert abs(x.mean()) < 4 * math.sqrt(w.sum() / x.size) * 8
    # different steps are uncorrelated
    s0 = integ.noise_pairs(1, list(range(50)), 0)[:, 0, 0, 0]
    s1 = integ.noise_pairs(1, list(range(50)), 1)[:, 0, 0, 0]
    assert abs(np.corrcoef(s0, s1)[0, 1]) < 4 / math.sqrt(s0.size)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_step_single_field_and_blowup(model):
    integ = Integrator(model, SPEC, 1e-3)
    u = np.ones(SPEC.shape)
    out = step(integ, u, np.zeros(SPEC.shape), SigmaSpec("id"))
    np.testing.assert_allclose(out, 1.0, rtol=1e-14)
    bad = u.copy()
    bad[0, 0, 0] = np.inf
    with pytest.raises(BlowupError):
        step(integ, bad, np.zeros(SPEC.shape), SigmaSpec("id"))


def test_scheme_field_weights_against_solver(model):
    dt, n = 4e-3, 5
    w = scheme_field_weights(model, SPEC, dt, n)
    tr = run(model, cfg("const:1", T=dt * n, dt=dt, replicas=400, snapshots=(dt * n,)))
    v = tr.u[0] - 1
    per = (v ** 2).reshape(v.shape[0], -1).mean(axis=1)
    se = per.std(ddof=1) / math.sqrt(per.size)
    assert abs(per.mean() - w.sum()) <= 3 * se
    # with const(c) the exact two-point function is 1 + c^2 Var
    M = pam_second_moment(model, SPEC, dt, n, SigmaSpec("const", 1.0))
    assert M.flat[0] == pytest.approx(1 + w.sum(), rel=1e-10)


def test_pam_second_moment_against_solver(model):
    dt, n = 4e-3, 5
    M = pam_second_moment(model, SPEC, dt, n)
    tr = run(model, cfg("id", T=dt * n, dt=dt, replicas=400, snapshots=(dt * n,)))
    per = (tr.u[0] ** 2).reshape(400, -1).mean(axis=1)
    se = per.std(ddof=1) / math.sqrt(per.size)
    assert abs(per.mean() - M.flat[0]) <= 3 * se
    with pytest.raises(ValueError):
        pam_second_moment(model, SPEC, dt, n, SigmaSpec("tanh", 1.0))


def test_mean_stays_one(model):
    tr = run(model, cfg("clip:2", replicas=200, snapshots=(0.02,)))
    per = tr.u[0].reshape(200, -1).mean(axis=1)
    assert abs(per.mean() - 1) <= 3 * per.std(ddof=1) / math.sqrt(per.size)


def test_linearization_residual(model):
    rows = linearization_residual(model, cfg("const:1"), [(1, 0, 0), (2, 0, 0)])
    assert all(r.resid == 0.0 for r in rows)
    rows = linearization_residual(model, cfg("tanh:1", replicas=2), [(2, 0, 0), (1, 0, 0)])
    assert all(r.ratio > 0 and r.eps > 0 for r in rows)
    with pytest.raises(ValueError):
        linearization_residual(model, cfg("tanh:1"), [(0, 0, 0)])


def test_beta_gamma():
    beta, gamma = beta_gamma(np.array([1e-2, 1e-4]))
    np.testing.assert_allclose(beta, np.exp(-np.sqrt(np.log([1e2, 1e4]))))
    np.testing.assert_allclose(gamma, (16 * beta) ** 0.25)
    assert np.all(np.diff(beta) < 0)


def test_solver_requires_rough_range():
    with pytest.raises(ValueError):
        Integrator(CorrelationModel(2.2), SPEC, 1e-3)
    with pytest.raises(ValueError):
        Integrator(CorrelationModel(1.5), LatticeSpec(8, 1.0, "2d"), 1e-3)
