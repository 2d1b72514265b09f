"""Deterministic finite-horizon environments with differentiable rewards.

An environment bundles the dynamics ``x' = f(x, u)``, a running reward
``r(x, u)``, a terminal reward ``r_T(x)`` and their gradients.  All reward
methods are vectorized over leading axes so a whole trajectory (or a batch of
trajectories) is evaluated in one call.

Jacobians use the gradient layout throughout the package:
``A[i, j] = d f_j / d x_i`` (D x D) and ``B[k, j] = d f_j / d u_k`` (K x D).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

__all__ = [
    "AugmentedEnvironment",
    "CartPole",
    "DivergedRolloutError",
    "EnvSpec",
    "Environment",
    "FunctionEnv",
    "LinearQuadratic",
    "PendulumParams",
    "RolloutCounter",
    "Trajectory",
    "augment_terminal_reward",
    "linear_env",
    "lqr_env",
    "pendulum_env",
    "random_lqr",
    "rollout",
    "rollout_many",
]

GRAVITY = 9.81


class DivergedRolloutError(FloatingPointError):
    """A rollout produced a non-finite state."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class RolloutCounter:
    """Thread-safe tally of true-environment rollouts."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def add(self, n=1):
        with self._lock:
            self._count += n
            return self._count

    @property
    def count(self):
        return self._count

    def reset(self):
        with self._lock:
            self._count = 0


#: Process-wide counter used when no per-run counter is supplied.
GLOBAL_ROLLOUTS = RolloutCounter()


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    horizon: int
    x0: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("state_dim", "action_dim", "horizon"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        if x0.shape != (self.state_dim,):
            raise ValueError(f"x0 must have {self.state_dim} entries, got {x0.shape[0]}")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        x0.flags.writeable = False
        object.__setattr__(self, "x0", x0)


@dataclass(frozen=True)
class Trajectory:
    """One pass through the true dynamics."""

    actions: np.ndarray
    states: np.ndarray
    running_rewards: np.ndarray
    terminal_reward: float
    return_J: float

    @property
    def horizon(self):
        return self.actions.shape[0]


def _left_to_right_total(running, terminal):
    # cumsum accumulates sequentially, matching a plain Python loop
    if running.shape[-1] == 0:
        return terminal + 0.0
    return np.cumsum(running, axis=-1)[..., -1] + terminal


class Environment:
    """Base class; subclasses provide ``step_batch`` and the reward functions.

    ``rollout_batch`` and ``jacobians`` have generic implementations in terms
    of ``step_batch`` and may be overridden by compiled versions.
    """

    spec: EnvSpec

    # dynamics ---------------------------------------------------------------
    def step_batch(self, X, U):
        raise NotImplementedError

    def step(self, x, u):
        x = np.asarray(x, dtype=float).reshape(1, -1)
        u = np.asarray(u, dtype=float).reshape(1, -1)
        return self.step_batch(x, u)[0]

    def rollout_batch(self, U):
        """States of shape (M, T + 1, D) for actions of shape (M, T, K)."""
        M, T, _ = U.shape
        X = np.empty((M, T + 1, self.spec.state_dim))
        X[:, 0] = self.spec.x0
        for t in range(T):
            X[:, t + 1] = self.step_batch(X[:, t], U[:, t])
        return X

    def jacobians(self, X, U, h=1e-6):
        """Central-difference Jacobians of ``step`` at each row of (X, U)."""
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        n, D = X.shape
        K = U.shape[1]
        eye_x = h * np.eye(D)
        eye_u = h * np.eye(K)
        Xp = np.concatenate([X[:, None, :] + eye_x, X[:, None, :] - eye_x,
                             np.repeat(X[:, None, :], 2 * K, axis=1)], axis=1)
        Up = np.concatenate([np.repeat(U[:, None, :], 2 * D, axis=1),
                             U[:, None, :] + eye_u, U[:, None, :] - eye_u], axis=1)
        F = self.step_batch(Xp.reshape(-1, D), Up.reshape(-1, K)).reshape(n, 2 * (D + K), D)
        A = (F[:, :D] - F[:, D:2 * D]) / (2 * h)
        B = (F[:, 2 * D:2 * D + K] - F[:, 2 * D + K:]) / (2 * h)
        return A, B

    # rewards ----------------------------------------------------------------
    def running_reward(self, X, U):
        raise NotImplementedError

    def running_reward_grads(self, X, U):
        """Return ``(d r / d x, d r / d u)`` with the shapes of X and U."""
        raise NotImplementedError

    def terminal_reward(self, X):
        raise NotImplementedError

    def terminal_reward_grad(self, X):
        raise NotImplementedError


class CartPole(Environment):
    """Cart-pole swing-up; state ``(l, l_dot, theta, theta_dot)``, theta = 0 upright.

    Point-mass tip on a massless rod, viscous friction on cart and pivot,
    classical RK4 integration.  The action is the horizontal force in units of
    ``force_unit`` newtons.
    """

    def __init__(self, params=None, horizon=100, x0=(0.0, 0.0, np.pi, 0.0),
                 control_cost=0.001):
        self.params = params if params is not None else PendulumParams()
        self.spec = EnvSpec(4, 1, horizon, x0)
        self.control_cost = control_cost
        p = self.params
        self._p = np.array([p.m1, p.m2, p.m3, p.m4, p.m5, p.dt, p.force_unit, GRAVITY])
        self._p.flags.writeable = False

    def __repr__(self):
        return f"CartPole({self.params!r}, horizon={self.spec.horizon})"

    def step_batch(self, X, U):
        X = np.ascontiguousarray(X, dtype=float).reshape(-1, 4)
        U = np.ascontiguousarray(U, dtype=float).reshape(-1, 1)
        return _kernels.cartpole_step_batch(self._p, X, U)

    def rollout_batch(self, U):
        U = np.ascontiguousarray(U, dtype=float)
        return _kernels.cartpole_rollout_batch(self._p, self.spec.x0, U)

    def jacobians(self, X, U, h=1e-6):
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        U = np.ascontiguousarray(np.atleast_2d(U), dtype=float)
        return _kernels.cartpole_fd_jacobians(self._p, X, U, h)

    def running_reward(self, X, U):
        return -self.control_cost * np.sum(np.square(U), axis=-1)

    def running_reward_grads(self, X, U):
        U = np.asarray(U, dtype=float)
        return np.zeros(np.shape(X)), -2.0 * self.control_cost * U

    def terminal_reward(self, X):
        return -np.sum(np.abs(X), axis=-1)

    def terminal_reward_grad(self, X):
        # np.sign(0) == 0: subgradient 0 at the kinks
        return -np.sign(np.asarray(X, dtype=float))


@dataclass(frozen=True)
class PendulumParams:
    """Cart-pole physical constants (SI units)."""

    m1: float = 1.0   # cart mass
    m2: float = 0.1   # tip mass
    m3: float = 0.5   # pendulum length
    m4: float = 0.01  # linear friction coefficient
    m5: float = 0.01  # rotational friction coefficient
    dt: float = 0.01
    force_unit: float = 50.0

    def __post_init__(self):
        for name in ("m1", "m2", "m3", "m4", "m5", "dt", "force_unit"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")

    @property
    def physical(self):
        return np.array([self.m1, self.m2, self.m3, self.m4, self.m5])

    def scaled(self, factors):
        """Copy with the five physical constants multiplied by ``factors``."""
        m = self.physical * np.asarray(factors, dtype=float)
        return PendulumParams(*m.tolist(), dt=self.dt, force_unit=self.force_unit)


def pendulum_env(params=None, T=100):
    """Cart-pole swing-up starting at rest hanging down, ``x0 = (0, 0, pi, 0)``."""
    return CartPole(params, horizon=T)


class LinearQuadratic(Environment):
    """``x' = A x + B u + c`` with ``r = -x'Qx - u'Ru`` and ``r_T = -x'Qf x``.

    ``A`` (D x D) and ``B`` (D x K) are in the usual state-space layout here;
    :meth:`jacobians` returns their transposes in gradient layout.
    """

    def __init__(self, A, B, Q, R, Qf, x0, T, c=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        D = A.shape[0]
        if A.shape != (D, D):
            raise ValueError(f"A must be square, got shape {A.shape}")
        if B.ndim != 2 or B.shape[0] != D:
            raise ValueError(f"B must have shape ({D}, K), got {B.shape}")
        K = B.shape[1]
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        R = np.atleast_2d(np.asarray(R, dtype=float))
        Qf = np.atleast_2d(np.asarray(Qf, dtype=float))
        for name, M, n in (("Q", Q, D), ("R", R, K), ("Qf", Qf, D)):
            if M.shape != (n, n):
                raise ValueError(f"{name} must have shape ({n}, {n}), got {M.shape}")
            if not np.allclose(M, M.T, rtol=0, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        c = np.zeros(D) if c is None else np.asarray(c, dtype=float).reshape(D)
        self.A, self.B, self.Q, self.R, self.Qf, self.c = A, B, Q, R, Qf, c
        for M in (A, B, Q, R, Qf, c):
            M.flags.writeable = False
        self.spec = EnvSpec(D, K, T, x0)

    def __repr__(self):
        return f"LinearQuadratic(D={self.spec.state_dim}, K={self.spec.action_dim}, T={self.spec.horizon})"

    def step_batch(self, X, U):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return X @ self.A.T + U @ self.B.T + self.c

    def jacobians(self, X, U, h=1e-6):
        n = np.atleast_2d(X).shape[0]
        return (np.broadcast_to(self.A.T, (n,) + self.A.shape).copy(),
                np.broadcast_to(self.B.T, (n,) + self.B.T.shape).copy())

    def running_reward(self, X, U):
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        return -np.einsum("...i,ij,...j->...", X, self.Q, X) - np.einsum("...i,ij,...j->...", U, self.R, U)

    def running_reward_grads(self, X, U):
        return -2.0 * np.asarray(X, dtype=float) @ self.Q, -2.0 * np.asarray(U, dtype=float) @ self.R

    def terminal_reward(self, X):
        X = np.asarray(X, dtype=float)
        return -np.einsum("...i,ij,...j->...", X, self.Qf, X)

    def terminal_reward_grad(self, X):
        return -2.0 * np.asarray(X, dtype=float) @ self.Qf

    # analytic optimum --------------------------------------------------------
    def riccati(self):
        """Backward Riccati recursion; returns (P_0..P_T, K_0..K_{T-1})."""
        if np.any(self.c):
            raise ValueError("Riccati oracle assumes c = 0")
        A, B = self.A, self.B
        P = self.Qf.copy()
        Ps = [P]
        gains = []
        for _ in range(self.spec.horizon):
            S = self.R + B.T @ P @ B
            G = np.linalg.solve(S, B.T @ P @ A)
            P = self.Q + A.T @ P @ A - A.T @ P @ B @ G
            P = 0.5 * (P + P.T)
            Ps.append(P)
            gains.append(G)
        return Ps[::-1], gains[::-1]

    def optimal_actions(self):
        """The open-loop optimal action sequence from ``x0``."""
        _, gains = self.riccati()
        x = np.array(self.spec.x0)
        U = np.empty((self.spec.horizon, self.spec.action_dim))
        for t, G in enumerate(gains):
            U[t] = -G @ x
            x = self.A @ x + self.B @ U[t]
        return U

    def optimal_return(self):
        """``J* = -x0' P_0 x0``."""
        Ps, _ = self.riccati()
        x0 = self.spec.x0
        return float(-x0 @ Ps[0] @ x0)

    def value_gradient(self, t, x, actions):
        """Exact ``d v_t / d x`` for a fixed action tail ``actions[t:]``.

        The value of a fixed open-loop tail is quadratic in x; its gradient is
        obtained by forward-propagating the state sensitivity.
        """
        T = self.spec.horizon
        x = np.asarray(x, dtype=float)
        S = np.eye(self.spec.state_dim)  # d x_tau / d x_t
        grad = np.zeros(self.spec.state_dim)
        for tau in range(t, T):
            grad += S @ (-2.0 * self.Q @ x)
            x = self.A @ x + self.B @ actions[tau] + self.c
            S = S @ self.A.T
        grad += S @ (-2.0 * self.Qf @ x)
        return grad

    def smoothness_constant(self):
        """Spectral norm of the (constant) Hessian of J.

        ``J`` is quadratic, so its gradient is Lipschitz with exactly this
        constant.  It also bounds every per-step block of the Hessian.
        """
        return float(np.linalg.norm(self.hessian(), 2))

    def hessian(self):
        """Hessian of J with respect to ``vec(u_{0:T-1})`` (row-major T x K)."""
        T, K, D = self.spec.horizon, self.spec.action_dim, self.spec.state_dim
        # x_t = A^t x0 + sum_{s<t} A^{t-1-s} B u_s  =>  x_t = G_t u + const
        G = np.zeros((T + 1, D, T * K))
        for t in range(1, T + 1):
            G[t] = self.A @ G[t - 1]
            G[t][:, (t - 1) * K:t * K] += self.B
        H = np.zeros((T * K, T * K))
        for t in range(T):
            H -= 2.0 * G[t].T @ self.Q @ G[t]
            H[t * K:(t + 1) * K, t * K:(t + 1) * K] -= 2.0 * self.R
        H -= 2.0 * G[T].T @ self.Qf @ G[T]
        return H


def lqr_env(A, B, Q, R, Qf, x0, T):
    """Finite-horizon LQR environment with an analytic optimal-return oracle."""
    env = LinearQuadratic(A, B, Q, R, Qf, x0, T)
    if np.linalg.eigvalsh(env.R).min() <= 0:
        raise ValueError("R must be positive definite")
    return env


def random_lqr(state_dim=2, action_dim=1, horizon=20, rng=None):
    """A random, well-conditioned LQR instance.

    ``A`` is a small perturbation of the identity scaled to spectral norm at
    most 0.95, ``Q`` and ``Qf`` are
    positive definite and ``R`` is a positive multiple of the identity.
    """
    rng = np.random.default_rng(rng)
    D, K = state_dim, action_dim
    A = np.eye(D) + 0.2 * rng.standard_normal((D, D)) / np.sqrt(D)
    A *= min(1.0, 0.95 / np.linalg.norm(A, 2))
    B = rng.standard_normal((D, K)) / np.sqrt(D)
    M = rng.standard_normal((D, D))
    Q = 0.1 * (M @ M.T / D + 0.5 * np.eye(D))
    R = rng.uniform(0.1, 1.0) * np.eye(K)
    Qf = M.T @ M / D + np.eye(D)
    x0 = rng.standard_normal(D)
    return lqr_env(A, B, Q, R, 0.5 * (Qf + Qf.T), x0, horizon)


def linear_env(A, B, x0, T, c=None, Qf=None):
    """Exactly linear (or affine) system, zero running reward, ``r_T = -x'Qf x``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    D, K = B.shape
    Qf = np.eye(D) if Qf is None else Qf
    return LinearQuadratic(A, B, np.zeros((D, D)), np.zeros((K, K)), Qf, x0, T, c=c)


class FunctionEnv(Environment):
    """Environment assembled from plain Python callables.

    ``step(x, u)`` acts on single vectors; reward callables must accept
    arrays with leading batch axes.  Missing gradients fall back to central
    differences of the reward functions.
    """

    def __init__(self, step, x0, T, action_dim, running_reward=None, terminal_reward=None,
                 running_reward_grads=None, terminal_reward_grad=None):
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        self.spec = EnvSpec(x0.shape[0], action_dim, T, x0)
        self._step = step
        self._r = running_reward or (lambda X, U: np.zeros(np.shape(X)[:-1]))
        self._rT = terminal_reward or (lambda X: np.zeros(np.shape(X)[:-1]))
        self._r_grads = running_reward_grads
        self._rT_grad = terminal_reward_grad

    def step_batch(self, X, U):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return np.array([np.asarray(self._step(x, u), dtype=float).reshape(-1) for x, u in zip(X, U)])

    def running_reward(self, X, U):
        return np.asarray(self._r(np.asarray(X, dtype=float), np.asarray(U, dtype=float)), dtype=float)

    def running_reward_grads(self, X, U):
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        if self._r_grads is not None:
            return self._r_grads(X, U)
        return (_fd_grad(lambda Z: self.running_reward(Z, U), X),
                _fd_grad(lambda Z: self.running_reward(X, Z), U))

    def terminal_reward(self, X):
        return np.asarray(self._rT(np.asarray(X, dtype=float)), dtype=float)

    def terminal_reward_grad(self, X):
        X = np.asarray(X, dtype=float)
        if self._rT_grad is not None:
            return self._rT_grad(X)
        return _fd_grad(self.terminal_reward, X)


def _fd_grad(fn, X, h=1e-6):
    X = np.asarray(X, dtype=float)
    G = np.empty_like(X)
    for i in range(X.shape[-1]):
        e = np.zeros(X.shape[-1])
        e[i] = h
        G[..., i] = (fn(X + e) - fn(X - e)) / (2 * h)
    return G


class AugmentedEnvironment(Environment):
    """Moves all running rewards into an extra state ``rho`` (last entry).

    ``rho_{t+1} = rho_t + r(x_t, u_t)``, running reward 0 and
    ``r'_T(x, rho) = r_T(x) + rho``.
    """

    def __init__(self, base):
        self.base = base
        s = base.spec
        self.spec = EnvSpec(s.state_dim + 1, s.action_dim, s.horizon, np.append(s.x0, 0.0))

    def step_batch(self, X, U):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        x, rho = X[:, :-1], X[:, -1]
        nxt = self.base.step_batch(x, U)
        return np.concatenate([nxt, (rho + self.base.running_reward(x, U))[:, None]], axis=1)

    def rollout_batch(self, U):
        inner = self.base.rollout_batch(U)
        r = self.base.running_reward(inner[:, :-1], U)
        rho = np.zeros(inner.shape[:2])
        # sequential accumulation, same order as the unaugmented return
        rho[:, 1:] = np.cumsum(r, axis=1)
        return np.concatenate([inner, rho[..., None]], axis=2)

    def jacobians(self, X, U, h=1e-6):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        n, D1 = X.shape
        D = D1 - 1
        K = U.shape[1]
        Ai, Bi = self.base.jacobians(X[:, :-1], U, h)
        gx, gu = self.base.running_reward_grads(X[:, :-1], U)
        A = np.zeros((n, D1, D1))
        A[:, :D, :D] = Ai
        A[:, :D, D] = gx
        A[:, D, D] = 1.0
        B = np.zeros((n, K, D1))
        B[:, :, :D] = Bi
        B[:, :, D] = gu
        return A, B

    def running_reward(self, X, U):
        return np.zeros(np.shape(X)[:-1])

    def running_reward_grads(self, X, U):
        return np.zeros(np.shape(X)), np.zeros(np.shape(U))

    def terminal_reward(self, X):
        X = np.asarray(X, dtype=float)
        return self.base.terminal_reward(X[..., :-1]) + X[..., -1]

    def terminal_reward_grad(self, X):
        X = np.asarray(X, dtype=float)
        g = np.empty_like(X)
        g[..., :-1] = self.base.terminal_reward_grad(X[..., :-1])
        g[..., -1] = 1.0
        return g


def augment_terminal_reward(env):
    """Equivalent environment whose running rewards are identically zero."""
    return AugmentedEnvironment(env)


def _check_actions(env, actions):
    actions = np.asarray(actions, dtype=float)
    T, K = env.spec.horizon, env.spec.action_dim
    if actions.ndim == 1 and K == 1:
        actions = actions[:, None]
    if actions.shape[-2:] != (T, K):
        raise ValueError(f"actions must have shape ({T}, {K}), got {actions.shape}")
    if not np.all(np.isfinite(actions)):
        raise ValueError("actions must be finite")
    return actions


def _first_bad_step(states):
    bad = ~np.all(np.isfinite(states), axis=-1)
    while bad.ndim > 1:
        bad = bad.any(axis=0)
    return int(np.argmax(bad))


def rollout_many(env, actions, counter=None):
    """Roll out a batch of action sequences (M, T, K).

    Returns ``(states, running_rewards, terminal_rewards, returns)``.  Adds M
    to the rollout counter.
    """
    actions = _check_actions(env, actions)
    if actions.ndim == 2:
        actions = actions[None]
    (counter or GLOBAL_ROLLOUTS).add(actions.shape[0])
    with np.errstate(all="ignore"):
        states = env.rollout_batch(actions)
    if not np.all(np.isfinite(states)):
        raise DivergedRolloutError(_first_bad_step(states))
    running = env.running_reward(states[:, :-1], actions)
    terminal = env.terminal_reward(states[:, -1])
    return states, running, terminal, _left_to_right_total(running, terminal)


def rollout(env, actions, counter=None):
    """Forward pass through the true dynamics; counts as one rollout."""
    actions = _check_actions(env, actions)
    states, running, terminal, J = rollout_many(env, actions[None], counter)
    return Trajectory(actions, states[0], running[0], float(terminal[0]), float(J[0]))
