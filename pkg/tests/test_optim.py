import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from olrl.envs import random_lqr, rollout
from olrl.optim import OptimizerState, apply_update, make_optimizer
from olrl.pontryagin import true_gradient


def test_plain_step():
    _, U = apply_update(make_optimizer("plain", 0.1), np.zeros((2, 1)), np.ones((2, 1)))
    np.testing.assert_allclose(U, 0.1)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.sampled_from([-1.0, 1.0]))
def test_adam_first_step_is_eta(mag, sign):
    eta = 0.01
    _, U = apply_update(make_optimizer("adam", eta), np.zeros((3, 2)), np.full((3, 2), sign * mag))
    # bias-corrected moments are g and g^2 on the first step
    expected = eta * mag / (mag + 1e-8)
    np.testing.assert_allclose(np.abs(U), expected, rtol=1e-12)
    np.testing.assert_allclose(np.abs(U), eta, rtol=0, atol=1e-6)
    assert np.all(np.sign(U) == sign)


def test_zero_gradient_leaves_actions():
    U0 = np.arange(4.0).reshape(2, 2)
    state, U = apply_update(make_optimizer("adam", 0.1), U0, np.zeros_like(U0))
    np.testing.assert_array_equal(U, U0)
    assert state.step == 1
    np.testing.assert_array_equal(state.m, 0)
    np.testing.assert_array_equal(state.v, 0)


def test_inputs_not_modified():
    U0 = np.zeros((2, 1))
    g = np.ones((2, 1))
    s0 = make_optimizer("adam", 0.1)
    apply_update(s0, U0, g)
    assert s0.step == 0 and s0.m is None and np.all(U0 == 0)


def test_non_finite_gradient_names_step():
    g = np.zeros((5, 1))
    g[3] = np.inf
    with pytest.raises(FloatingPointError, match="t=3"):
        apply_update(make_optimizer(), np.zeros((5, 1)), g)


def test_validation():
    with pytest.raises(ValueError):
        OptimizerState("sgd")
    with pytest.raises(ValueError):
        OptimizerState("adam", eta=0.0)
    with pytest.raises(ValueError):
        apply_update(make_optimizer(), np.zeros((2, 1)), np.zeros((3, 1)))


def test_plain_ascent_is_monotone_on_lqr():
    env = random_lqr(3, 2, 10, 5)
    eta = 1.0 / env.smoothness_constant()
    state = make_optimizer("plain", eta)
    U = np.random.default_rng(0).normal(size=(10, 2))
    prev = rollout(env, U).return_J
    for _ in range(50):
        state, U = apply_update(state, U, true_gradient(env, U))
        J = rollout(env, U).return_J
        assert J >= prev - 1e-12
        prev = J
