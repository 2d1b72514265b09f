import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from olrl.algorithms import OracleOptimizer
from olrl.envs import linear_env, pendulum_env, random_lqr
from olrl.jacobians import JacobianEstimate
from olrl.theory import (
    TheoryConstants,
    assumption2_bounds,
    assumption2_check,
    empirical_smoothness,
    gradient_check,
    gradient_quality_monitor,
    theorem1_report,
)

small = st.floats(0.0, 10.0, allow_nan=False)


@settings(max_examples=200)
@given(small, small)
def test_mu_nu_identities(gamma, zeta):
    # follows directly from mu = 1 - gamma - zeta - gamma*zeta and nu = 1 + gamma + zeta + gamma*zeta
    c = TheoryConstants(gamma, zeta)
    assert c.mu + c.nu == pytest.approx(2.0, rel=1e-12, abs=1e-12)
    assert c.nu - c.mu == pytest.approx(2 * (gamma + zeta + gamma * zeta), rel=1e-12, abs=1e-12)
    assert c.mu == 1.0 - gamma - zeta - gamma * zeta


def test_alpha_example():
    assert TheoryConstants(0.0, 0.0, L=2.0, eta=0.1).alpha == pytest.approx(0.9)


def test_constants_validation():
    with pytest.raises(ValueError):
        TheoryConstants(-0.1, 0.0)
    with pytest.raises(ValueError):
        TheoryConstants(0.0, 0.0, eta=0.0)
    assert not TheoryConstants(0.5, 0.5).admissible
    assert TheoryConstants(0.2, 0.2).admissible


def identity_jacs(T, D=2, K=2):
    return [JacobianEstimate(np.eye(D), np.eye(K, D)) for _ in range(T)]


def test_bounds_identity():
    b = assumption2_bounds(identity_jacs(3), 0.3, 0.2)
    assert b.rhs_A[0, 0] == pytest.approx(0.1)
    assert b.rhs_A[0, 1] == pytest.approx(0.3 / 9)
    assert np.isnan(b.rhs_A[2, 0])
    np.testing.assert_allclose(b.rhs_B, 0.2)


def test_bounds_scalar_example():
    A = np.array([[[1.0]], [[3.0]]])
    B = np.array([[[2.0]], [[1.0]]])
    b = assumption2_bounds((A, B), 0.3, 0.2)
    assert b.rhs_A[0, 0] == pytest.approx(0.3)


def test_bounds_b_example():
    B = np.array([[[0.5, 0.0], [0.0, 2.0]]])
    b = assumption2_bounds((np.eye(2)[None], B), 0.1, 0.2)
    assert b.rhs_B[0] == pytest.approx(0.1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1000), st.floats(0.01, 0.5), st.floats(0.0, 0.5), st.floats(0.01, 0.5))
def test_bounds_monotone(seed, gamma, dg, zeta):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(4, 3, 3)), rng.normal(size=(4, 2, 3))
    lo = assumption2_bounds((A, B), gamma, zeta)
    hi = assumption2_bounds((A, B), gamma + dg, zeta + dg)
    ok = ~np.isnan(lo.rhs_A)
    assert np.all(hi.rhs_A[ok] >= lo.rhs_A[ok])
    assert np.all(hi.rhs_B >= lo.rhs_B)


def test_check_exact_estimates():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(5, 2, 2)), rng.normal(size=(5, 1, 2))
    assert assumption2_check((A, B), (A.copy(), B.copy()), 0.2, 0.3).verdict
    assert not assumption2_check((A, B), (A.copy(), B.copy()), 0.5, 0.5).verdict


def test_check_single_injected_error():
    A = np.array([[[1.0]], [[3.0]]])
    B = np.array([[[2.0]], [[1.0]]])
    rhs = assumption2_bounds((A, B), 0.3, 0.2).rhs_A[0, 0]
    Ah = A.copy()
    Ah[1, 0, 0] += rhs * 1.001
    res = assumption2_check((A, B), (Ah, B), 0.3, 0.2)
    assert np.count_nonzero(~res.ok_A) == 1 and not res.ok_A[0, 0]
    assert res.ok_B.all() and not res.verdict


def test_check_shape_mismatch():
    with pytest.raises(ValueError):
        assumption2_check(identity_jacs(3), identity_jacs(2), 0.1, 0.1)


def test_quality_monitor():
    rng = np.random.default_rng(0)
    g = rng.normal(size=(6, 2))
    inner, norm = gradient_quality_monitor(g, g, 1.0, 1.0)
    assert inner.all() and norm.all()
    inner, norm = gradient_quality_monitor(2 * g, g, 1.0, 1.5)
    assert inner.all() and not norm.any()
    with pytest.raises(ValueError):
        gradient_quality_monitor(g, g, 2.0, 1.0)


def lqr_run(env, n_steps=300):
    L = env.smoothness_constant()
    est = OracleOptimizer(n_steps=n_steps, eta=1 / L, optimizer="plain", random_state=0,
                          record_gradients=True).fit(env)
    return est.curve_, TheoryConstants(0.0, 0.0, L, 1 / L)


@pytest.mark.parametrize("seed", range(20))
def test_descent_bound_holds_on_lqr(seed):
    rng = np.random.default_rng(seed)
    env = random_lqr(int(rng.integers(1, 5)), int(rng.integers(1, 3)), int(rng.integers(5, 21)), rng)
    curve, c = lqr_run(env)
    report = theorem1_report(curve, c, env.optimal_return())
    assert report.violations == 0
    assert report.alpha == pytest.approx(0.5)


def test_descent_bound_zero_reward():
    env = linear_env(np.eye(2), np.ones((2, 1)), [1, 1], 5, Qf=np.zeros((2, 2)))
    est = OracleOptimizer(n_steps=20, optimizer="plain", eta=0.1, record_gradients=True,
                          random_state=0).fit(env)
    report = theorem1_report(est.curve_, TheoryConstants(0, 0, 1.0, 0.1), 0.0)
    assert report.rhs == 0 and np.all(report.lhs == 0) and report.violations == 0


def test_descent_bound_rejects_large_step():
    env = random_lqr(2, 1, 5, 0)
    curve, _ = lqr_run(env, 5)
    with pytest.raises(ValueError):
        theorem1_report(curve, TheoryConstants(0, 0, 10.0, 1.0), env.optimal_return())
    est = OracleOptimizer(n_steps=3).fit(env)
    with pytest.raises(ValueError):
        theorem1_report(est.curve_, TheoryConstants(0, 0, 1.0, 0.1), env.optimal_return())


def test_gradient_check_lqr_and_pendulum():
    lqr = random_lqr(3, 2, 10, 1)
    U = np.random.default_rng(0).normal(size=(10, 2))
    assert gradient_check(lqr, U).max_rel_error <= 1e-6
    pend = pendulum_env()
    U = np.random.default_rng(1).normal(0, 0.5, (100, 1))
    res = gradient_check(pend, U, h=1e-5)
    assert res.max_rel_error <= 1e-4
    assert res.gradient.shape == res.fd_gradient.shape == (100, 1)


def test_gradient_check_zero_reward():
    env = linear_env(np.eye(2), np.ones((2, 1)), [1, 1], 4, Qf=np.zeros((2, 2)))
    res = gradient_check(env, np.ones((4, 1)))
    assert res.max_rel_error == 0
    with pytest.raises(ValueError):
        gradient_check(env, np.ones((4, 1)), h=0)


def test_empirical_smoothness_bounded_by_hessian_norm():
    env = random_lqr(2, 1, 6, 3)
    est = empirical_smoothness(env, n_pairs=10, rng=0)
    assert 0 < est <= env.smoothness_constant() * (1 + 1e-4)
