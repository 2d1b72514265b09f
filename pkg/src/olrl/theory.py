"""Runtime checks for the convergence theory of approximate-Jacobian ascent.

* :class:`TheoryConstants` - the error tolerances gamma, zeta, smoothness L
  and step size eta, with the derived mu, nu and alpha.
* :func:`assumption2_bounds` / :func:`assumption2_check` - admissible
  Jacobian errors along a trajectory.
* :func:`theorem1_report` - the averaged squared-gradient bound.
* :func:`gradient_quality_monitor` - the inner-product and norm conditions
  on an estimated gradient.
* :func:`gradient_check` - backward-pass gradient against central
  differences of the return.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .envs import rollout_many
from .pontryagin import true_gradient

__all__ = [
    "Assumption2Bounds",
    "Assumption2Check",
    "GradientCheck",
    "TheoryConstants",
    "Theorem1Report",
    "assumption2_bounds",
    "assumption2_check",
    "empirical_smoothness",
    "gradient_check",
    "gradient_quality_monitor",
    "theorem1_report",
]


@dataclass(frozen=True)
class TheoryConstants:
    """Jacobian error tolerances and step-size constants.

    ``mu``, ``nu`` and ``alpha`` are derived, never stored independently.
    """

    gamma: float = 0.0
    zeta: float = 0.0
    L: float = 1.0
    eta: float = 1e-3

    def __post_init__(self):
        if not (self.gamma >= 0 and self.zeta >= 0):
            raise ValueError("gamma and zeta must be non-negative")
        if not self.L >= 0:
            raise ValueError("L must be non-negative")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def mu(self):
        return 1.0 - self.gamma - self.zeta - self.gamma * self.zeta

    @property
    def nu(self):
        return 1.0 + self.gamma + self.zeta + self.gamma * self.zeta

    @property
    def alpha(self):
        return self.mu - 0.5 * self.eta * self.L * self.nu ** 2

    @property
    def admissible(self):
        """Whether ``gamma + zeta + gamma*zeta < 1`` (that is ``mu > 0``)."""
        return self.gamma + self.zeta + self.gamma * self.zeta < 1.0


# -- admissible Jacobian errors -------------------------------------------------

def _jacobian_stacks(jacs):
    """(A, B) stacks (T, D, D), (T, K, D) from estimates or an ``(A, B)`` pair."""
    if isinstance(jacs, tuple) and len(jacs) == 2 and np.ndim(jacs[0]) == 3:
        return np.asarray(jacs[0], dtype=float), np.asarray(jacs[1], dtype=float)
    A = np.array([np.atleast_2d(j.A) for j in jacs], dtype=float)
    B = np.array([np.atleast_2d(j.B) for j in jacs], dtype=float)
    return A, B


def _singular_values(M):
    s = np.linalg.svd(M, compute_uv=False)
    return s.min(axis=-1), s.max(axis=-1)


class Assumption2Bounds(NamedTuple):
    rhs_A: np.ndarray
    """(T, T); ``rhs_A[t, s-1]`` bounds the error of ``A_{t+s}``, NaN where t+s > T-1."""
    rhs_B: np.ndarray
    """(T,); bound on the error of ``B_t``."""


def assumption2_bounds(true_jacs, gamma, zeta):
    """Right-hand sides of the admissible-error conditions.

    For every t and ``s = 1..T-1-t``::

        rhs_A[t, s-1] = gamma / 3**s * smin(B_t)/smax(B_t)
                        * prod_{i=1}^{s-1} smin(A_{t+i})/smax(A_{t+i})
                        * smin(A_{t+s})
        rhs_B[t]      = zeta * smin(B_t)

    ``true_jacs`` is a list of :class:`~olrl.jacobians.JacobianEstimate` or
    an ``(A, B)`` pair of stacks in gradient layout.  Transposition leaves
    singular values unchanged, so the layout does not matter here.
    """
    if not (gamma > 0 and zeta > 0):
        raise ValueError("gamma and zeta must be positive")
    A, B = _jacobian_stacks(true_jacs)
    T = A.shape[0]
    a_min, a_max = _singular_values(A)
    b_min, b_max = _singular_values(B)
    with np.errstate(divide="ignore", invalid="ignore"):
        a_ratio = np.where(a_max > 0, a_min / a_max, 0.0)
        b_ratio = np.where(b_max > 0, b_min / b_max, 0.0)
    rhs_A = np.full((T, T), np.nan)
    for t in range(T):
        chain = gamma * b_ratio[t]
        for s in range(1, T - t):
            rhs_A[t, s - 1] = chain / 3.0 ** s * a_min[t + s]
            chain *= a_ratio[t + s]
    return Assumption2Bounds(rhs_A, zeta * b_min)


class Assumption2Check(NamedTuple):
    ok_A: np.ndarray
    """(T, T) booleans aligned with ``rhs_A``; cells outside the horizon are True."""
    ok_B: np.ndarray
    err_A: np.ndarray
    err_B: np.ndarray
    bounds: Assumption2Bounds
    verdict: bool


def assumption2_check(true_jacs, estimates, gamma, zeta):
    """Compare spectral-norm Jacobian errors against :func:`assumption2_bounds`.

    The overall verdict additionally requires ``gamma + zeta + gamma*zeta < 1``.
    """
    A, B = _jacobian_stacks(true_jacs)
    Ah, Bh = _jacobian_stacks(estimates)
    if Ah.shape != A.shape or Bh.shape != B.shape:
        raise ValueError("estimates and true Jacobians must have matching shapes")
    bounds = assumption2_bounds((A, B), gamma, zeta)
    T = A.shape[0]
    err_A = np.linalg.norm(Ah - A, 2, axis=(1, 2))
    err_B = np.linalg.norm(Bh - B, 2, axis=(1, 2))
    ok_A = np.ones((T, T), dtype=bool)
    for t in range(T):
        for s in range(1, T - t):
            ok_A[t, s - 1] = err_A[t + s] <= bounds.rhs_A[t, s - 1]
    ok_B = err_B <= bounds.rhs_B
    admissible = gamma + zeta + gamma * zeta < 1.0
    verdict = bool(admissible and ok_A.all() and ok_B.all())
    return Assumption2Check(ok_A, ok_B, err_A, err_B, bounds, verdict)


# -- convergence bound ----------------------------------------------------------

class Theorem1Report(NamedTuple):
    lhs: np.ndarray
    """(T,) average over iterations of the squared gradient norm at step t."""
    rhs: float
    satisfied: np.ndarray
    alpha: float
    n_iterations: int

    @property
    def violations(self):
        return int(np.count_nonzero(~self.satisfied))


def theorem1_report(curve, constants, J_star, J0=None):
    """Check ``mean_k ||grad_{u_t} J(u^k)||^2 <= (J* - J(u^0)) / (alpha eta N)`` per t.

    ``curve.diagnostics["grad_sq_norms"]`` must hold the squared true
    gradient norms, shape (N, T), as recorded by an oracle run with
    ``record_gradients=True``.  ``J0`` defaults to the first recorded return.
    """
    alpha = constants.alpha
    if not alpha > 0:
        raise ValueError(f"alpha = {alpha:.6g} must be positive; reduce eta")
    try:
        sq = np.asarray(curve.diagnostics["grad_sq_norms"], dtype=float)
    except KeyError:
        raise ValueError("curve carries no recorded gradient norms") from None
    if sq.ndim != 2 or sq.shape[0] < 1:
        raise ValueError("gradient norms must have shape (N, T) with N >= 1")
    if J0 is None:
        if curve.iterations.size == 0 or curve.iterations[0] != 0:
            raise ValueError("J(u^0) was not recorded")
        J0 = float(curve.J[0])
    N = sq.shape[0]
    lhs = sq.mean(axis=0)
    rhs = (J_star - J0) / (alpha * constants.eta * N)
    return Theorem1Report(lhs, rhs, lhs <= rhs, alpha, N)


def gradient_quality_monitor(g, true_g, mu, nu):
    """Per-t flags ``(inner_ok, norm_ok)`` for ``g_t . dJ_t >= mu |dJ_t|^2`` and ``|g_t| <= nu |dJ_t|``.

    Inputs have shape (..., T, K); flags have shape (..., T).
    """
    if mu > nu:
        raise ValueError("mu must not exceed nu")
    g = np.asarray(g, dtype=float)
    true_g = np.asarray(true_g, dtype=float)
    if g.shape != true_g.shape:
        raise ValueError("g and true_g must have the same shape")
    true_sq = np.sum(true_g * true_g, axis=-1)
    inner_ok = np.sum(g * true_g, axis=-1) >= mu * true_sq
    norm_ok = np.sqrt(np.sum(g * g, axis=-1)) <= nu * np.sqrt(true_sq)
    return inner_ok, norm_ok


# -- gradient verification ------------------------------------------------------

class GradientCheck(NamedTuple):
    max_rel_error: float
    location: tuple
    """(t, k) index of the worst entry."""
    gradient: np.ndarray
    fd_gradient: np.ndarray


def gradient_check(env, actions, h=1e-5, jac_h=1e-6, floor=1e-8):
    """Backward-pass gradient against central differences of J, entry by entry.

    The relative error of an entry is ``|g - fd| / max(|g|, |fd|, floor)``;
    entries where both are exactly zero count as zero error.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    actions = np.asarray(actions, dtype=float).reshape(env.spec.horizon, env.spec.action_dim)
    g = true_gradient(env, actions, h=jac_h)
    T, K = actions.shape
    E = np.eye(T * K).reshape(T * K, T, K) * h
    _, _, _, Jp = rollout_many(env, actions + E)
    _, _, _, Jm = rollout_many(env, actions - E)
    if not (np.all(np.isfinite(Jp)) and np.all(np.isfinite(Jm))):
        raise FloatingPointError("non-finite return while probing")
    fd = ((Jp - Jm) / (2.0 * h)).reshape(T, K)
    diff = np.abs(g - fd)
    scale = np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor)
    rel = np.where(diff == 0, 0.0, diff / scale)
    loc = np.unravel_index(int(np.argmax(rel)), rel.shape)
    return GradientCheck(float(rel[loc]), tuple(int(i) for i in loc), g, fd)


def empirical_smoothness(env, n_pairs=20, scale=0.1, radius=1e-2, center=None, rng=None):
    """Largest observed ``|grad_t J(u) - grad_t J(u')| / |u - u'|`` over random pairs.

    This is a lower estimate of the smoothness constant around ``center``
    (reported, not certified).
    """
    rng = np.random.default_rng(rng)
    T, K = env.spec.horizon, env.spec.action_dim
    center = np.zeros((T, K)) if center is None else np.asarray(center, dtype=float).reshape(T, K)
    best = 0.0
    for _ in range(n_pairs):
        u = center + scale * rng.standard_normal((T, K))
        d = rng.standard_normal((T, K))
        d *= radius / np.linalg.norm(d)
        gu = true_gradient(env, u)
        gv = true_gradient(env, u + d)
        best = max(best, float(np.max(np.linalg.norm(gu - gv, axis=1))) / radius)
    return best
