"""Jacobian providers for the backward pass.

* :class:`OracleProvider` - central differences of the true dynamics.
* :class:`ModelProvider` - Jacobians of a differentiable model.
* :func:`fit_on_trajectory` / :class:`OnTrajectoryProvider` - least squares
  on deviations of perturbed rollouts from a reference rollout.
* :func:`fit_on_trajectory_affine` - the same with an affine offset,
  regressing on absolute states.
* :class:`RlsState` - recursive least squares with forgetting and a
  re-injected prior, carried across iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .pontryagin import JacobianProvider

__all__ = [
    "DivergedProbeError",
    "JacobianEstimate",
    "ModelProvider",
    "OnTrajectoryProvider",
    "OracleProvider",
    "RlsProvider",
    "RlsState",
    "fit_on_trajectory",
    "fit_on_trajectory_affine",
    "lstsq_min_norm",
    "model_jacobians",
    "oracle_jacobians",
    "rls_update",
]


class DivergedProbeError(FloatingPointError):
    pass


@dataclass(frozen=True)
class JacobianEstimate:
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray | None = None
    t: int | None = None


def lstsq_min_norm(Z, Y, rcond=None):
    """Minimum-norm least-squares solution of ``Z W ~= Y``.

    ``Z`` may carry a leading batch axis.  ``rcond`` defaults to
    ``eps * max(M, P)`` like :func:`numpy.linalg.lstsq`.
    """
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    squeeze_y = Y.ndim == Z.ndim - 1
    if squeeze_y:
        Y = Y[..., None]
    if rcond is None:
        rcond = np.finfo(float).eps * max(Z.shape[-2:])
    if Z.ndim == 2 and max(Z.shape) > 32:
        # LAPACK is faster once the system is no longer tiny
        W = np.linalg.lstsq(Z, Y, rcond=rcond)[0]
    elif Z.ndim == 2:
        W = _kernels.min_norm_lstsq(np.ascontiguousarray(Z), np.ascontiguousarray(Y), rcond)
    else:
        W = _kernels.batched_lstsq(np.ascontiguousarray(Z), np.ascontiguousarray(Y), rcond)
    return W[..., 0] if squeeze_y else W


# -- oracle -------------------------------------------------------------------

def oracle_jacobians(env, x, u, h=1e-6):
    """Central-difference Jacobians of ``env.step`` at (x, u), gradient layout."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    u = np.asarray(u, dtype=float).reshape(1, -1)
    A, B = env.jacobians(x, u, h)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise DivergedProbeError("non-finite dynamics evaluation while probing")
    return JacobianEstimate(A[0], B[0])


class OracleProvider(JacobianProvider):
    """True-dynamics Jacobians by central differences (probes are not rollouts)."""

    def __init__(self, env, h=1e-6):
        self.env = env
        self.h = h

    def jacobian(self, t, x, u, traj):
        est = oracle_jacobians(self.env, x, u, self.h)
        return est.A, est.B

    def batch(self, traj):
        A, B = self.env.jacobians(traj.states[:-1], traj.actions, self.h)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise DivergedProbeError("non-finite dynamics evaluation while probing")
        return A, B


# -- model ------------------------------------------------------------------

def model_jacobians(model, x, u):
    A, B = model.jacobians(x, u)
    return JacobianEstimate(np.asarray(A), np.asarray(B))


class ModelProvider(JacobianProvider):
    def __init__(self, model):
        self.model = model

    def jacobian(self, t, x, u, traj):
        return self.model.jacobians(x, u)

    def batch(self, traj):
        return self.model.jacobians_batch(traj.states[:-1], traj.actions)


# -- on-trajectory least squares -------------------------------------------------

def _stack_trajectories(perturbed):
    states = np.stack([p.states for p in perturbed])
    actions = np.stack([p.actions for p in perturbed])
    return states, actions


def on_trajectory_arrays(ref_states, ref_actions, states, actions, rcond=None):
    """Deviation least squares for all t at once.

    ``states`` (M, T+1, D) and ``actions`` (M, T, K) are the perturbed
    rollouts.  Returns ``(A, B)`` of shapes (T, D, D) and (T, K, D).
    """
    D = ref_states.shape[-1]
    dx = states - ref_states
    du = actions - ref_actions
    Z = np.concatenate([dx[:, :-1], du], axis=2).transpose(1, 0, 2)
    Y = dx[:, 1:].transpose(1, 0, 2)
    W = lstsq_min_norm(Z, Y, rcond)
    return W[:, :D], W[:, D:]


def fit_on_trajectory(ref, perturbed, rcond=None):
    """Per-step ``(A_t, B_t)`` from deviations of perturbed rollouts around ``ref``."""
    if len(perturbed) < 1:
        raise ValueError("need at least one perturbed trajectory")
    states, actions = _stack_trajectories(perturbed)
    if states.shape[1:] != ref.states.shape or actions.shape[1:] != ref.actions.shape:
        raise ValueError("perturbed trajectories must match the reference dimensions")
    A, B = on_trajectory_arrays(ref.states, ref.actions, states, actions, rcond)
    return [JacobianEstimate(A[t], B[t], t=t) for t in range(ref.horizon)]


def affine_arrays(X, U, Xn, rcond=None):
    """Affine least squares per t; X (T, M, D), U (T, M, K), Xn (T, M, D)."""
    D = X.shape[-1]
    K = U.shape[-1]
    Z = np.concatenate([X, U, np.ones(X.shape[:-1] + (1,))], axis=-1)
    W = lstsq_min_norm(Z, Xn, rcond)
    return W[:, :D], W[:, D:D + K], W[:, D + K]


def fit_on_trajectory_affine(transitions, rcond=None):
    """Fit ``x' ~= A'x + B'u + c`` independently for every t.

    ``transitions[t]`` is a sequence of M ``(x, u, x_next)`` triples, or an
    equivalent tuple of arrays ``(X, U, Xn)``.
    """
    X, U, Xn = [], [], []
    for item in transitions:
        if len(item) == 3 and np.ndim(item[0]) == 2:
            x, u, xn = item
        else:
            x, u, xn = (np.array([np.ravel(tr[i]) for tr in item], dtype=float) for i in range(3))
        X.append(np.atleast_2d(np.asarray(x, dtype=float)))
        U.append(np.atleast_2d(np.asarray(u, dtype=float)))
        Xn.append(np.atleast_2d(np.asarray(xn, dtype=float)))
    if len({x.shape for x in X}) != 1 or len({u.shape for u in U}) != 1:
        raise ValueError("every time step needs the same number of transitions")
    if X[0].shape[0] < 1:
        raise ValueError("need at least one transition per step")
    A, B, c = affine_arrays(np.stack(X), np.stack(U), np.stack(Xn), rcond)
    return [JacobianEstimate(A[t], B[t], c[t], t) for t in range(len(X))]


class OnTrajectoryProvider(JacobianProvider):
    """Least-squares Jacobians from perturbed rollouts around the reference."""

    def __init__(self, states, actions, affine=False, rcond=None):
        self.states = states
        self.actions = actions
        self.affine = affine
        self.rcond = rcond
        self._cache = None

    def _fit(self, traj):
        if self.affine:
            A, B, _ = affine_arrays(
                self.states[:, :-1].transpose(1, 0, 2),
                self.actions.transpose(1, 0, 2),
                self.states[:, 1:].transpose(1, 0, 2),
                self.rcond,
            )
            return A, B
        return on_trajectory_arrays(traj.states, traj.actions, self.states, self.actions, self.rcond)

    def batch(self, traj):
        return self._fit(traj)

    def jacobian(self, t, x, u, traj):
        if self._cache is None or self._cache[0] is not traj:
            self._cache = (traj, self._fit(traj))
        A, B = self._cache[1]
        return A[t], B[t]


# -- recursive least squares ----------------------------------------------------

class RlsState:
    """Per-step linear models ``x_{t+1} ~= F_t z_t`` with ``z_t = (x_t, u_t, 1)``.

    ``F`` has shape (T, D, D+K+1) and the precisions ``Q`` shape
    (T, D+K+1, D+K+1).  Every update applies

        Q_t <- alpha Q_t + (1 - alpha) q0 I + z z'
        F_t <- F_t + (x_next - F_t z) (Q_t^{-1} z)'

    so the prior precision never decays below ``q0 I``.  ``prior`` sets the
    initial coefficients: ``"zeros"``, or ``"identity"`` for ``x_{t+1} = x_t``.
    """

    PRIORS = ("zeros", "identity")

    def __init__(self, horizon, state_dim, action_dim, alpha=0.8, q0=1e-3, prior="zeros"):
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0,1]")
        if not q0 > 0:
            raise ValueError("q0 must be positive")
        if prior not in self.PRIORS:
            raise ValueError(f"prior must be one of {self.PRIORS}")
        self.alpha = float(alpha)
        self.q0 = float(q0)
        self.state_dim = state_dim
        self.action_dim = action_dim
        P = state_dim + action_dim + 1
        self.F = np.zeros((horizon, state_dim, P))
        if prior == "identity":
            self.F[:, :, :state_dim] = np.eye(state_dim)
        self.Q = np.tile(q0 * np.eye(P), (horizon, 1, 1))

    @property
    def horizon(self):
        return self.F.shape[0]

    def update(self, t, z, x_next):
        z = np.asarray(z, dtype=float)
        if z[-1] != 1.0:
            raise ValueError("z must end with the constant 1")
        _kernels.rls_sweep(self.F[t:t + 1], self.Q[t:t + 1], z[None].copy(),
                           np.asarray(x_next, dtype=float)[None].copy(), self.alpha, self.q0)
        return self

    def update_trajectory(self, states, actions):
        """Update every t from one rollout's transitions."""
        T = self.horizon
        Z = np.empty((T, self.F.shape[2]))
        Z[:, :self.state_dim] = states[:-1]
        Z[:, self.state_dim:-1] = actions
        Z[:, -1] = 1.0
        _kernels.rls_sweep(self.F, self.Q, Z, np.ascontiguousarray(states[1:]), self.alpha, self.q0)
        return self

    def jacobians(self):
        """Current ``(A, B, c)`` stacks in gradient layout."""
        D, K = self.state_dim, self.action_dim
        A = self.F[:, :, :D].transpose(0, 2, 1)
        B = self.F[:, :, D:D + K].transpose(0, 2, 1)
        return A, B, self.F[:, :, -1]

    def estimate(self, t):
        A, B, c = self.jacobians()
        return JacobianEstimate(A[t].copy(), B[t].copy(), c[t].copy(), t)


def rls_update(state, t, z, x_next):
    """Apply one recursive-least-squares update at time ``t``; returns ``state``."""
    return state.update(t, z, x_next)


class RlsProvider(JacobianProvider):
    """Reads the current estimates out of an :class:`RlsState`."""

    def __init__(self, state):
        self.state = state

    def jacobian(self, t, x, u, traj):
        est = self.state.estimate(t)
        return est.A, est.B

    def batch(self, traj):
        A, B, _ = self.state.jacobians()
        return A, B
