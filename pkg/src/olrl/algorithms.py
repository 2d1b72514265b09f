"""End-to-end optimizers over open-loop action sequences.

Every optimizer is a scikit-learn style estimator: hyperparameters go to the
constructor, ``fit(env)`` runs the optimization and stores ``actions_``,
``curve_`` and ``J_max_``.

========================  ===========================================  =====================
estimator                 Jacobians / update                           true rollouts / iter
========================  ===========================================  =====================
OracleOptimizer           finite differences of the true dynamics      1
ModelBasedOptimizer       differentiable model along the true rollout  1
PlannerOptimizer          model along an imagined rollout              0 (+1 bookkeeping)
OnTrajectoryOptimizer     least squares on M perturbed rollouts        M + 1
OffTrajectoryOptimizer    recursive least squares across iterations    1
FiniteDifferenceOptimizer least-squares gradient of the return         M + 1
CrossEntropyOptimizer     elite mean, fixed noise scale                M
========================  ===========================================  =====================
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator

from .envs import RolloutCounter, Trajectory, rollout, rollout_many
from .jacobians import (
    ModelProvider,
    OnTrajectoryProvider,
    OracleProvider,
    RlsProvider,
    RlsState,
    lstsq_min_norm,
)
from .optim import OptimizerState, apply_update
from .pontryagin import JacobianProviderError, NumericOverflowError, _costates, backward_pass

__all__ = [
    "ALGORITHMS",
    "CrossEntropyOptimizer",
    "FiniteDifferenceOptimizer",
    "LearningCurve",
    "ModelBasedOptimizer",
    "OffTrajectoryOptimizer",
    "OnTrajectoryOptimizer",
    "OpenLoopOptimizer",
    "OracleOptimizer",
    "PlannerOptimizer",
    "RunConfig",
    "SOLVE_THRESHOLD",
    "make_optimizer_from_config",
    "run_cem",
    "run_finite_difference",
    "run_model_based",
    "run_off_trajectory",
    "run_on_trajectory",
    "run_oracle",
    "run_planner",
]

SOLVE_THRESHOLD = -0.03

# errors that abort a run but keep the partial curve
_RUN_ERRORS = (FloatingPointError, JacobianProviderError, NumericOverflowError, np.linalg.LinAlgError)


@dataclass
class LearningCurve:
    """Returns of every evaluated iterate ``u^(k)`` of one run.

    ``rollouts[i]`` is the cumulative number of learning rollouts spent when
    ``J[i]`` became known.  Bookkeeping rollouts that only measure J are
    excluded there and counted in ``eval_rollouts``.
    """

    algorithm: str
    iterations: np.ndarray
    rollouts: np.ndarray
    J: np.ndarray
    rollouts_per_iteration: int
    eval_rollouts: int
    total_rollouts: int
    n_steps: int
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def J_max(self):
        return float(np.max(self.J)) if self.J.size else -math.inf

    @property
    def running_max(self):
        return np.maximum.accumulate(self.J)

    @property
    def learning_rollouts(self):
        return self.total_rollouts - self.eval_rollouts

    def solved(self, threshold=SOLVE_THRESHOLD):
        return self.J_max > threshold

    def rollouts_to_solve(self, threshold=SOLVE_THRESHOLD):
        """Cumulative rollouts at the first iterate above ``threshold`` (None if never)."""
        hit = np.flatnonzero(self.J > threshold)
        return int(self.rollouts[hit[0]]) if hit.size else None


class _Recorder:
    def __init__(self, counter):
        self.counter = counter
        self.iterations = []
        self.rollouts = []
        self.J = []
        self.eval_rollouts = 0

    def record(self, k, J):
        self.iterations.append(k)
        self.rollouts.append(self.counter.count - self.eval_rollouts)
        self.J.append(J)


def _as_trajectory(actions, states, running, terminal, J):
    return Trajectory(actions, states, running, float(terminal), float(J))


class OpenLoopOptimizer(BaseEstimator):
    """Shared driver: initialization, the iteration loop and bookkeeping.

    Parameters
    ----------
    n_steps : int
        Number of optimization iterations N.
    eta : float
        Step size of the ascent optimizer.
    optimizer : {"adam", "plain"}
        Update rule applied to the gradient estimates.
    init_std : float
        Standard deviation of the zero-mean Gaussian initial actions.
    random_state : int, SeedSequence or None
        Seed of the run's random stream.
    stop_above : float or None
        Stop as soon as a recorded return exceeds this value.  J_max and the
        rollouts-to-solve of a run are then already final for that threshold.
    """

    name = "base"
    uses_optimizer = True

    def __init__(self, n_steps=50000, eta=1e-3, optimizer="adam", init_std=0.01, random_state=None,
                 stop_above=None):
        self.n_steps = n_steps
        self.stop_above = stop_above
        self.eta = eta
        self.optimizer = optimizer
        self.init_std = init_std
        self.random_state = random_state

    # hooks ------------------------------------------------------------------
    def _validate(self, env):
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValueError("n_steps must be a non-negative integer")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.init_std >= 0:
            raise ValueError("init_std must be non-negative")

    def _setup(self, env, rng):
        pass

    def _iterate(self, env, U, k, rng):
        """Return the next iterate; must record J(u^(k-1)) when it is known."""
        raise NotImplementedError

    def _evaluate(self, env, U, k):
        """Bookkeeping rollout recording J(u^(k))."""
        traj = rollout(env, U, self._counter)
        self._rec.eval_rollouts += 1
        self._rec.record(k, traj.return_J)

    def _evaluates_every_iteration(self):
        return True

    # driver -----------------------------------------------------------------
    def fit(self, env, init_actions=None):
        self._validate(env)
        rng = np.random.default_rng(self.random_state)
        T, K = env.spec.horizon, env.spec.action_dim
        if init_actions is None:
            U = rng.normal(0.0, self.init_std, (T, K))
        else:
            U = np.array(init_actions, dtype=float).reshape(T, K)
        self._counter = RolloutCounter()
        self._rec = _Recorder(self._counter)
        self._opt = OptimizerState(self.optimizer, self.eta)
        self._setup(env, rng)
        error = None
        stop = self.stop_above
        k = 0
        try:
            for k in range(1, int(self.n_steps) + 1):
                U = self._iterate(env, U, k, rng)
                if stop is not None and self._rec.J and self._rec.J[-1] > stop:
                    break
            else:
                k = int(self.n_steps)
                self._evaluate(env, U, k)
        except _RUN_ERRORS as exc:
            error = f"iteration {k}: {exc}"
        rec = self._rec
        self.actions_ = U
        self.curve_ = LearningCurve(
            algorithm=self.name,
            iterations=np.asarray(rec.iterations, dtype=np.int64),
            rollouts=np.asarray(rec.rollouts, dtype=np.int64),
            J=np.asarray(rec.J, dtype=float),
            rollouts_per_iteration=self.rollouts_per_iteration,
            eval_rollouts=rec.eval_rollouts,
            total_rollouts=self._counter.count,
            n_steps=int(self.n_steps),
            diagnostics=self._diagnostics(),
            error=error,
        )
        self.J_max_ = self.curve_.J_max
        self.n_rollouts_ = self._counter.count
        return self

    def _diagnostics(self):
        return {}

    def _ascend(self, U, g):
        with np.errstate(over="ignore", invalid="ignore"):
            self._opt, U = apply_update(self._opt, U, g)
        if not np.all(np.isfinite(U)):
            raise FloatingPointError("ascent step produced non-finite actions")
        return U

    def score(self, env):
        """Return of the fitted action sequence (one extra rollout)."""
        return rollout(env, self.actions_).return_J

    @property
    def rollouts_per_iteration(self):
        return 1


class _PontryaginMixin:
    """Optional per-iteration gradient diagnostics for Pontryagin-style methods."""

    def _init_diag(self):
        self._grad_sq = [] if getattr(self, "record_gradients", False) else None
        self._monitor = [] if getattr(self, "monitor_oracle", False) else None

    def _log_gradients(self, env, traj, g):
        if self._grad_sq is not None:
            self._grad_sq.append(np.sum(g * g, axis=1))
        if self._monitor is not None:
            true_g = backward_pass(traj, OracleProvider(env), env).gradients
            self._monitor.append((g.copy(), true_g))

    def _diagnostics(self):
        out = {}
        if self._grad_sq is not None:
            out["grad_sq_norms"] = np.array(self._grad_sq)
        if self._monitor is not None:
            out["gradients"] = np.array([m[0] for m in self._monitor])
            out["true_gradients"] = np.array([m[1] for m in self._monitor])
        return out


class OracleOptimizer(_PontryaginMixin, OpenLoopOptimizer):
    """Pontryagin ascent with central-difference Jacobians of the true dynamics."""

    name = "oracle"

    def __init__(self, n_steps=50000, eta=1e-3, optimizer="adam", init_std=0.01, random_state=None,
                 stop_above=None, h=1e-6, record_gradients=False):
        super().__init__(n_steps, eta, optimizer, init_std, random_state, stop_above)
        self.h = h
        self.record_gradients = record_gradients

    def _setup(self, env, rng):
        self._provider = OracleProvider(env, self.h)
        self._init_diag()

    def _iterate(self, env, U, k, rng):
        traj = rollout(env, U, self._counter)
        self._rec.record(k - 1, traj.return_J)
        g = backward_pass(traj, self._provider, env).gradients
        self._log_gradients(env, traj, g)
        return self._ascend(U, g)


class ModelBasedOptimizer(_PontryaginMixin, OpenLoopOptimizer):
    """True rollouts, model Jacobians in the backward pass."""

    name = "model_based"

    def __init__(self, model=None, n_steps=50000, eta=1e-3, optimizer="adam", init_std=0.01,
                 random_state=None, stop_above=None, record_gradients=False):
        super().__init__(n_steps, eta, optimizer, init_std, random_state, stop_above)
        self.model = model
        self.record_gradients = record_gradients

    def _validate(self, env):
        super()._validate(env)
        if self.model is None:
            raise ValueError("a differentiable model is required")
        if (self.model.state_dim, self.model.action_dim) != (env.spec.state_dim, env.spec.action_dim):
            raise ValueError("model dimensions do not match the environment")

    def _setup(self, env, rng):
        self._provider = ModelProvider(self.model)
        self._init_diag()

    def _iterate(self, env, U, k, rng):
        traj = rollout(env, U, self._counter)
        self._rec.record(k - 1, traj.return_J)
        g = backward_pass(traj, self._provider, env).gradients
        self._log_gradients(env, traj, g)
        return self._ascend(U, g)


class PlannerOptimizer(ModelBasedOptimizer):
    """Backpropagation through the model: imagined rollout, model Jacobians.

    One true rollout per iteration is spent only to record J; it is counted
    as a bookkeeping rollout.
    """

    name = "planner"

    def planner_gradient(self, env, U):
        """Gradient of the model-predicted return and the imagined states."""
        X = self.model.imagine(env.spec.x0, U)
        if not np.all(np.isfinite(X)):
            raise FloatingPointError("imagined rollout diverged")
        A, B = self.model.jacobians_batch(X[:-1], U)
        return _costates(env, X, U, A, B).gradients, X

    def _iterate(self, env, U, k, rng):
        g, _ = self.planner_gradient(env, U)
        self._evaluate(env, U, k - 1)
        return self._ascend(U, g)

    @property
    def rollouts_per_iteration(self):
        return 0


class OnTrajectoryOptimizer(_PontryaginMixin, OpenLoopOptimizer):
    """Jacobians from least squares on M perturbed rollouts around the iterate.

    ``affine=True`` regresses absolute transitions with an offset instead of
    deviations from the reference.
    """

    name = "on_trajectory"

    def __init__(self, n_rollouts=10, sigma=1e-3, n_steps=50000, eta=1e-3, optimizer="adam",
                 init_std=0.01, random_state=None, stop_above=None, affine=False, rcond=None,
                 record_gradients=False, monitor_oracle=False):
        super().__init__(n_steps, eta, optimizer, init_std, random_state, stop_above)
        self.n_rollouts = n_rollouts
        self.sigma = sigma
        self.affine = affine
        self.rcond = rcond
        self.record_gradients = record_gradients
        self.monitor_oracle = monitor_oracle

    def _validate(self, env):
        super()._validate(env)
        if int(self.n_rollouts) != self.n_rollouts or self.n_rollouts < 1:
            raise ValueError("n_rollouts (M) must be at least 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def _setup(self, env, rng):
        self._init_diag()

    def _iterate(self, env, U, k, rng):
        traj = rollout(env, U, self._counter)
        self._rec.record(k - 1, traj.return_J)
        Up = U + self.sigma * rng.standard_normal((self.n_rollouts,) + U.shape)
        states, *_ = rollout_many(env, Up, self._counter)
        provider = OnTrajectoryProvider(states, Up, self.affine, self.rcond)
        g = backward_pass(traj, provider, env).gradients
        self._log_gradients(env, traj, g)
        return self._ascend(U, g)

    @property
    def rollouts_per_iteration(self):
        return self.n_rollouts + 1


class OffTrajectoryOptimizer(_PontryaginMixin, OpenLoopOptimizer):
    """One perturbed rollout per iteration; Jacobians from recursive least squares.

    The backward pass runs along the perturbed rollout; the ascent step is
    applied to the unperturbed mean sequence.  J of the mean is measured with
    a bookkeeping rollout every ``eval_every`` iterations.  ``rls_prior``
    picks the initial RLS coefficients (see :class:`RlsState`).
    """

    name = "off_trajectory"

    def __init__(self, alpha=0.8, q0=1e-3, sigma=1e-3, n_steps=50000, eta=1e-3, optimizer="adam",
                 init_std=0.01, random_state=None, stop_above=None, eval_every=1, record_gradients=False,
                 monitor_oracle=False, record_rls=False, rls_prior="zeros"):
        super().__init__(n_steps, eta, optimizer, init_std, random_state, stop_above)
        self.alpha = alpha
        self.q0 = q0
        self.sigma = sigma
        self.eval_every = eval_every
        self.record_gradients = record_gradients
        self.monitor_oracle = monitor_oracle
        self.record_rls = record_rls
        self.rls_prior = rls_prior

    def _validate(self, env):
        super()._validate(env)
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0,1]")
        if not self.q0 > 0:
            raise ValueError("q0 must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if int(self.eval_every) != self.eval_every or self.eval_every < 1:
            raise ValueError("eval_every must be a positive integer")
        if self.rls_prior not in RlsState.PRIORS:
            raise ValueError(f"rls_prior must be one of {RlsState.PRIORS}")

    def _setup(self, env, rng):
        s = env.spec
        self.rls_ = RlsState(s.horizon, s.state_dim, s.action_dim, self.alpha, self.q0, self.rls_prior)
        self._provider = RlsProvider(self.rls_)
        self._init_diag()
        self._rls_trace = [] if self.record_rls else None
        self.last_trace_ = None

    def _iterate(self, env, U, k, rng):
        if (k - 1) % self.eval_every == 0:
            self._evaluate(env, U, k - 1)
        Up = U + self.sigma * rng.standard_normal(U.shape)
        traj = rollout(env, Up, self._counter)
        self.rls_.update_trajectory(traj.states, traj.actions)
        g = backward_pass(traj, self._provider, env).gradients
        self._log_gradients(env, traj, g)
        if self._rls_trace is not None:
            A, B, _ = self.rls_.jacobians()
            self._rls_trace.append((A.copy(), B.copy()))
        self.last_trace_ = (traj, g)
        return self._ascend(U, g)

    def _diagnostics(self):
        out = super()._diagnostics()
        if self._rls_trace is not None:
            out["rls_A"] = np.array([a for a, _ in self._rls_trace])
            out["rls_B"] = np.array([b for _, b in self._rls_trace])
        return out


class FiniteDifferenceOptimizer(OpenLoopOptimizer):
    """Least-squares fit of the return gradient from M perturbed returns."""

    name = "finite_difference"

    def __init__(self, n_rollouts=20, sigma=1e-4, n_steps=50000, eta=1e-3, optimizer="adam",
                 init_std=0.01, random_state=None, stop_above=None, rcond=None):
        super().__init__(n_steps, eta, optimizer, init_std, random_state, stop_above)
        self.n_rollouts = n_rollouts
        self.sigma = sigma
        self.rcond = rcond

    def _validate(self, env):
        super()._validate(env)
        if int(self.n_rollouts) != self.n_rollouts or self.n_rollouts < 1:
            raise ValueError("n_rollouts (M) must be at least 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def estimate_gradient(self, J_ref, U, Up, J):
        dU = (Up - U).reshape(Up.shape[0], -1)
        g = lstsq_min_norm(dU, (J - J_ref)[:, None], self.rcond)[:, 0]
        return g.reshape(U.shape)

    def _iterate(self, env, U, k, rng):
        traj = rollout(env, U, self._counter)
        self._rec.record(k - 1, traj.return_J)
        Up = U + self.sigma * rng.standard_normal((self.n_rollouts,) + U.shape)
        *_, J = rollout_many(env, Up, self._counter)
        return self._ascend(U, self.estimate_gradient(traj.return_J, U, Up, J))

    @property
    def rollouts_per_iteration(self):
        return self.n_rollouts + 1


class CrossEntropyOptimizer(OpenLoopOptimizer):
    """Mean-only cross-entropy method with a fixed noise scale.

    ``n_elite`` defaults to ``max(1, ceil(M / 5))``.  Ties in the return are
    broken in favour of the lower sample index.
    """

    name = "cem"

    def __init__(self, n_rollouts=20, sigma=1e-3, n_elite=None, n_steps=50000, init_std=0.01,
                 random_state=None, stop_above=None, eval_every=1):
        super().__init__(n_steps, 1.0, "plain", init_std, random_state, stop_above)
        self.n_rollouts = n_rollouts
        self.sigma = sigma
        self.n_elite = n_elite
        self.eval_every = eval_every

    @property
    def elite_size(self):
        if self.n_elite is None:
            return max(1, math.ceil(self.n_rollouts / 5))
        return self.n_elite

    def _validate(self, env):
        super()._validate(env)
        if int(self.n_rollouts) != self.n_rollouts or self.n_rollouts < 1:
            raise ValueError("n_rollouts (M) must be at least 1")
        if not 1 <= self.elite_size <= self.n_rollouts:
            raise ValueError("n_elite (L) must satisfy 1 <= L <= M")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")

    @staticmethod
    def elite_indices(J, L):
        # stable sort keeps the lower index first among equal returns
        return np.argsort(-np.asarray(J), kind="stable")[:L]

    def _iterate(self, env, U, k, rng):
        if (k - 1) % self.eval_every == 0:
            self._evaluate(env, U, k - 1)
        Up = U + self.sigma * rng.standard_normal((self.n_rollouts,) + U.shape)
        *_, J = rollout_many(env, Up, self._counter)
        return Up[self.elite_indices(J, self.elite_size)].mean(axis=0)

    @property
    def rollouts_per_iteration(self):
        return self.n_rollouts


# -- configuration ------------------------------------------------------------

ALGORITHMS = (
    "oracle",
    "model_based",
    "planner",
    "on_trajectory",
    "on_trajectory_affine",
    "off_trajectory",
    "finite_difference",
    "cem",
)
ENVS = ("pendulum", "lqr")
MODELS = ("exact", "perturbed", "mlp")


@dataclass(frozen=True)
class RunConfig:
    """Flat run description; ``None`` fields resolve to per-algorithm defaults."""

    env: str = "pendulum"
    algorithm: str = "off_trajectory"
    N: int = 50000
    eta: float = 0.001
    sigma: float | None = None
    M: int | None = None
    alpha: float = 0.8
    q0: float = 0.001
    rls_prior: str = "zeros"
    L: int | None = None
    optimizer: str = "adam"
    oracle: bool = False
    seed: int = 0
    init_std: float = 0.01
    T: int = 100
    model: str = "exact"
    model_scale: float = 0.0
    threshold: float = SOLVE_THRESHOLD
    eval_every: int = 1
    stop_when_solved: bool = False
    lqr_state_dim: int = 2
    lqr_action_dim: int = 1
    env_seed: int = 0

    def __post_init__(self):
        if self.env not in ENVS:
            raise ValueError(f"env must be one of {ENVS}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.optimizer not in ("adam", "plain"):
            raise ValueError("optimizer must be 'adam' or 'plain'")
        for name in ("N", "seed", "env_seed"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer")
        for name in ("T", "eval_every", "lqr_state_dim", "lqr_action_dim"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0,1]")
        if not self.q0 > 0:
            raise ValueError("q0 must be positive")
        if self.rls_prior not in RlsState.PRIORS:
            raise ValueError(f"rls_prior must be one of {RlsState.PRIORS}")
        if not self.init_std >= 0:
            raise ValueError("init_std must be non-negative")
        if not self.model_scale >= 0:
            raise ValueError("model_scale must be non-negative")
        if self.sigma is not None and not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if self.M is not None and (not isinstance(self.M, int) or self.M < 1):
            raise ValueError("M must be a positive integer")
        if self.L is not None and (not isinstance(self.L, int) or self.L < 1):
            raise ValueError("L must be a positive integer")
        if self.L is not None and self.L > self.resolved_M:
            raise ValueError("L must not exceed M")

    @property
    def resolved_M(self):
        if self.M is not None:
            return self.M
        return 20 if self.algorithm in ("finite_difference", "cem") else 10

    @property
    def resolved_sigma(self):
        if self.sigma is not None:
            return self.sigma
        return 1e-4 if self.algorithm == "finite_difference" else 1e-3

    @property
    def resolved_L(self):
        return self.L if self.L is not None else max(1, math.ceil(self.resolved_M / 5))

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self, resolved=True):
        d = asdict(self)
        if resolved:
            d["M"] = self.resolved_M
            d["sigma"] = self.resolved_sigma
            d["L"] = self.resolved_L
        return d


def make_optimizer_from_config(cfg, random_state, model=None):
    """Estimator for ``cfg.algorithm`` seeded with ``random_state``."""
    stop = cfg.threshold if cfg.stop_when_solved else None
    common = dict(n_steps=cfg.N, init_std=cfg.init_std, random_state=random_state, stop_above=stop)
    grad = dict(common, eta=cfg.eta, optimizer=cfg.optimizer)
    algo = cfg.algorithm
    if algo == "oracle" or cfg.oracle:
        return OracleOptimizer(**grad)
    if algo == "model_based":
        return ModelBasedOptimizer(model=model, **grad)
    if algo == "planner":
        return PlannerOptimizer(model=model, **grad)
    if algo in ("on_trajectory", "on_trajectory_affine"):
        return OnTrajectoryOptimizer(cfg.resolved_M, cfg.resolved_sigma,
                                     affine=algo == "on_trajectory_affine", **grad)
    if algo == "off_trajectory":
        return OffTrajectoryOptimizer(cfg.alpha, cfg.q0, cfg.resolved_sigma, eval_every=cfg.eval_every,
                                      rls_prior=cfg.rls_prior, **grad)
    if algo == "finite_difference":
        return FiniteDifferenceOptimizer(cfg.resolved_M, cfg.resolved_sigma, **grad)
    if algo == "cem":
        return CrossEntropyOptimizer(cfg.resolved_M, cfg.resolved_sigma, cfg.resolved_L,
                                     eval_every=cfg.eval_every, **common)
    raise ValueError(f"unknown algorithm {algo!r}")


def _run(cfg, env, model=None, algorithm=None):
    if algorithm is not None and cfg.algorithm != algorithm:
        cfg = RunConfig(**{**cfg.to_dict(resolved=False), "algorithm": algorithm})
    est = make_optimizer_from_config(cfg, cfg.seed, model)
    return est.fit(env).curve_


def run_oracle(cfg, env):
    return _run(cfg, env, algorithm="oracle")


def run_model_based(cfg, env, model):
    return _run(cfg, env, model, "model_based")


def run_planner(cfg, env, model):
    return _run(cfg, env, model, "planner")


def run_on_trajectory(cfg, env):
    algo = cfg.algorithm if cfg.algorithm.startswith("on_trajectory") else "on_trajectory"
    return _run(cfg, env, algorithm=algo)


def run_off_trajectory(cfg, env):
    return _run(cfg, env, algorithm="off_trajectory")


def run_finite_difference(cfg, env):
    return _run(cfg, env, algorithm="finite_difference")


def run_cem(cfg, env):
    return _run(cfg, env, algorithm="cem")
