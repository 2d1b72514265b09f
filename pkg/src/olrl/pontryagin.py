"""Costate backward pass shared by every gradient-based method.

Given a trajectory from the true system and any source of Jacobian estimates,
the backward recursion

    lam_T = grad r_T(x_T)
    lam_t = grad_x r(x_t, u_t) + A_t lam_{t+1}
    g_t   = grad_u r(x_t, u_t) + B_t lam_{t+1}

yields an estimate ``g`` of the gradient of the return with respect to every
action.  With exact Jacobians ``g`` is the true gradient.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import _kernels
from .envs import rollout

__all__ = [
    "BackwardResult",
    "JacobianProvider",
    "JacobianProviderError",
    "NumericOverflowError",
    "backward_pass",
    "true_gradient",
]


class JacobianProviderError(RuntimeError):
    """A Jacobian provider failed; ``t`` is the time step being processed."""

    def __init__(self, t, cause):
        self.t = t
        super().__init__(f"Jacobian provider failed at t={t}: {cause}")


class NumericOverflowError(FloatingPointError):
    pass


class BackwardResult(NamedTuple):
    costates: np.ndarray
    """(T, D); row t holds lam_{t+1}, so the last row is grad r_T(x_T)."""
    gradients: np.ndarray
    """(T, K); row t is the gradient estimate for u_t."""


class JacobianProvider:
    """Source of per-step Jacobian estimates ``(A_t, B_t)`` in gradient layout.

    Subclasses implement :meth:`jacobian`.  :meth:`batch` queries it once per
    time step in the order T-1, ..., 0 and may be overridden by providers that
    can produce all estimates at once.
    """

    def jacobian(self, t, x, u, traj):
        raise NotImplementedError

    def batch(self, traj):
        T = traj.horizon
        A = B = None
        for t in range(T - 1, -1, -1):
            try:
                At, Bt = self.jacobian(t, traj.states[t], traj.actions[t], traj)
            except Exception as exc:
                raise JacobianProviderError(t, exc) from exc
            if A is None:
                A = np.empty((T,) + np.shape(At))
                B = np.empty((T,) + np.shape(Bt))
            A[t] = At
            B[t] = Bt
        return A, B


def _costates(env, states, actions, A, B):
    rx, ru = env.running_reward_grads(states[:-1], actions)
    lam_T = np.asarray(env.terminal_reward_grad(states[-1]), dtype=float)
    lam, g = _kernels.costate_recursion(
        np.ascontiguousarray(A, dtype=float),
        np.ascontiguousarray(B, dtype=float),
        np.ascontiguousarray(rx, dtype=float),
        np.ascontiguousarray(ru, dtype=float),
        lam_T,
    )
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(g))):
        bad = np.flatnonzero(~np.all(np.isfinite(lam), axis=1))
        t = int(bad.max()) if bad.size else 0
        raise NumericOverflowError(f"non-finite costate at t={t}")
    return BackwardResult(lam, g)


def backward_pass(traj, provider, env):
    """Costates and action gradients along ``traj`` using ``provider``'s Jacobians."""
    A, B = provider.batch(traj)
    D, K = env.spec.state_dim, env.spec.action_dim
    T = traj.horizon
    if np.shape(A) != (T, D, D) or np.shape(B) != (T, K, D):
        raise ValueError(
            f"provider returned A{np.shape(A)}, B{np.shape(B)}; expected ({T},{D},{D}), ({T},{K},{D})")
    return _costates(env, traj.states, traj.actions, A, B)


def true_gradient(env, actions, counter=None, h=1e-6):
    """Gradient of the return via one rollout and finite-difference Jacobians."""
    from .jacobians import OracleProvider

    traj = rollout(env, actions, counter)
    return backward_pass(traj, OracleProvider(env, h), env).gradients
