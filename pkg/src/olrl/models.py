"""Approximate differentiable dynamics models and action-noise generators."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _kernels
from .envs import CartPole, PendulumParams, rollout_many
from .optim import OptimizerState, apply_update

__all__ = [
    "DifferentiableModel",
    "EnvModel",
    "MLPDynamics",
    "MlpConfig",
    "PendulumModel",
    "TrainingFailure",
    "load_mlp",
    "perturbed_pendulum_model",
    "pink_noise_sequence",
    "save_mlp",
    "train_mlp_model",
    "white_noise_perturb",
]

MAGIC = b"OLRL-MLP-v1\0\0\0\0\0"


class TrainingFailure(RuntimeError):
    pass


class DifferentiableModel:
    """``predict(x, u) -> x'`` plus its Jacobians in gradient layout.

    Batched methods take (n, D) states and (n, K) actions; ``imagine`` rolls
    a whole action sequence through the model.
    """

    state_dim: int
    action_dim: int

    def predict_batch(self, X, U):
        raise NotImplementedError

    def jacobians_batch(self, X, U):
        raise NotImplementedError

    def predict_step(self, x, u):
        return self.predict_batch(np.reshape(x, (1, -1)), np.reshape(u, (1, -1)))[0]

    def jacobians(self, x, u):
        A, B = self.jacobians_batch(np.reshape(x, (1, -1)), np.reshape(u, (1, -1)))
        return A[0], B[0]

    def imagine(self, x0, U):
        """Model states (T + 1, D) obtained by feeding ``U`` from ``x0``."""
        U = np.asarray(U, dtype=float)
        X = np.empty((U.shape[0] + 1, np.size(x0)))
        X[0] = x0
        for t in range(U.shape[0]):
            X[t + 1] = self.predict_step(X[t], U[t])
        return X


class EnvModel(DifferentiableModel):
    """Use an environment's own dynamics as an exact model."""

    def __init__(self, env, h=1e-6):
        self.env = env
        self.h = h
        self.state_dim = env.spec.state_dim
        self.action_dim = env.spec.action_dim

    def predict_batch(self, X, U):
        return self.env.step_batch(X, U)

    def jacobians_batch(self, X, U):
        return self.env.jacobians(X, U, self.h)

    def imagine(self, x0, U):
        U = np.asarray(U, dtype=float).reshape(-1, self.action_dim)
        if not np.array_equal(np.asarray(x0, dtype=float), self.env.spec.x0):
            return super().imagine(x0, U)
        return self.env.rollout_batch(U[None])[0]


class PendulumModel(DifferentiableModel):
    """A cart-pole with (possibly wrong) physical constants used as a model."""

    state_dim = 4
    action_dim = 1

    def __init__(self, params=None, multipliers=None, h=1e-6):
        self.params = params if params is not None else PendulumParams()
        self.multipliers = np.ones(5) if multipliers is None else np.asarray(multipliers, dtype=float)
        self.h = h
        self._env = CartPole(self.params)

    def __repr__(self):
        return f"PendulumModel({self.params!r})"

    def predict_batch(self, X, U):
        return self._env.step_batch(X, U)

    def jacobians_batch(self, X, U):
        return self._env.jacobians(X, U, self.h)

    def imagine(self, x0, U):
        U = np.ascontiguousarray(np.asarray(U, dtype=float).reshape(-1, 1))
        return _kernels.cartpole_rollout_batch(self._env._p, np.asarray(x0, dtype=float), U[None])[0]


def perturbed_pendulum_model(base=None, s=0.0, rng_seed=None):
    """Multiply each physical constant by its own ``exp(N(0, s^2))`` draw.

    ``s = 0`` reproduces the true dynamics exactly.
    """
    if s < 0:
        raise ValueError("s must be non-negative")
    base = base if base is not None else PendulumParams()
    rng = np.random.default_rng(rng_seed)
    xi = np.exp(s * rng.standard_normal(5))
    if s == 0:
        return PendulumModel(base, np.ones(5))
    return PendulumModel(base.scaled(xi), xi)


# -- noise --------------------------------------------------------------------

def pink_noise_sequence(T, K, scale, rng):
    """Zero-mean 1/f noise of shape (T, K), independent across columns.

    White Gaussian spectra are shaped by ``1/sqrt(f)`` with the DC bin
    removed, then normalized so the expected per-step standard deviation is
    ``scale``.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(rng)
    f = np.fft.rfftfreq(T)
    H = np.zeros_like(f)
    H[1:] = 1.0 / np.sqrt(f[1:])
    # expected variance of irfft(H * rfft(w)) for unit white noise w
    weights = np.full(f.shape, 2.0)
    weights[0] = 1.0
    if T % 2 == 0:
        weights[-1] = 1.0
    var = np.sum(weights * H**2) / T
    if var == 0:
        return np.zeros((T, K))
    white = rng.standard_normal((K, T))
    colored = np.fft.irfft(np.fft.rfft(white, axis=1) * H, n=T, axis=1)
    return scale * colored.T / np.sqrt(var)


def white_noise_perturb(base, sigma, rng):
    """``base + sigma * N(0, I)``; ``sigma = 0`` returns ``base`` unchanged."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    base = np.asarray(base, dtype=float)
    if sigma == 0:
        return base.copy()
    rng = np.random.default_rng(rng)
    return base + sigma * rng.standard_normal(base.shape)


# -- MLP ----------------------------------------------------------------------

@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (16, 16)
    activation: str = "tanh"
    epochs: int = 10
    batch_size: int = 100
    step_size: float = 0.002
    weight_decay: float = 0.001
    rollout_count: int = 1000
    noise_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.activation != "tanh":
            raise ValueError("only tanh activations are supported")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden widths must be positive")
        for name in ("epochs", "batch_size", "step_size", "weight_decay", "rollout_count", "noise_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@njit(cache=True)
def _mlp_imagine(theta, sizes, mu_in, s_in, s_out, x0, U):
    T = U.shape[0]
    D = x0.shape[0]
    K = U.shape[1]
    X = np.empty((T + 1, D))
    X[0] = x0
    n_layers = sizes.shape[0] - 1
    width = sizes.max()
    a = np.empty(width)
    b = np.empty(width)
    for t in range(T):
        for i in range(D):
            a[i] = (X[t, i] - mu_in[i]) / s_in[i]
        for k in range(K):
            a[D + k] = (U[t, k] - mu_in[D + k]) / s_in[D + k]
        off = 0
        for layer in range(n_layers):
            n_in = sizes[layer]
            n_out = sizes[layer + 1]
            w_off = off
            b_off = off + n_in * n_out
            for o in range(n_out):
                acc = theta[b_off + o]
                for i in range(n_in):
                    acc += theta[w_off + o * n_in + i] * a[i]
                b[o] = np.tanh(acc) if layer < n_layers - 1 else acc
            off = b_off + n_out
            for o in range(n_out):
                a[o] = b[o]
        for i in range(D):
            X[t + 1, i] = X[t, i] + a[i] * s_out[i]
    return X


class MLPDynamics(BaseEstimator, RegressorMixin, DifferentiableModel):
    """Tanh MLP predicting the state increment ``x' - x`` from ``(x, u)``.

    ``fit(X, y)`` takes rows ``X = [x, u]`` and next states ``y = x'``.
    Inputs are standardized; increments are divided by their standard
    deviation (no mean shift, so an all-zero network is the identity map).
    Trained with Adam and decoupled weight decay.
    """

    def __init__(self, hidden=(16, 16), epochs=10, batch_size=100, step_size=0.002,
                 weight_decay=0.001, random_state=None):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.step_size = step_size
        self.weight_decay = weight_decay
        self.random_state = random_state

    # parameter layout: per layer W (out, in) row-major then b (out)
    def _layers(self, theta=None):
        theta = self.theta_ if theta is None else theta
        out = []
        off = 0
        for n_in, n_out in zip(self.sizes_[:-1], self.sizes_[1:]):
            W = theta[off:off + n_in * n_out].reshape(n_out, n_in)
            off += n_in * n_out
            b = theta[off:off + n_out]
            off += n_out
            out.append((W, b))
        return out

    def _init_params(self, rng):
        chunks = []
        for n_in, n_out in zip(self.sizes_[:-1], self.sizes_[1:]):
            bound = 1.0 / np.sqrt(n_in)
            chunks.append(rng.uniform(-bound, bound, n_in * n_out))
            chunks.append(rng.uniform(-bound, bound, n_out))
        return np.concatenate(chunks)

    def _forward(self, Zs, theta=None):
        acts = [Zs]
        layers = self._layers(theta)
        h = Zs
        for i, (W, b) in enumerate(layers):
            h = h @ W.T + b
            if i < len(layers) - 1:
                h = np.tanh(h)
            acts.append(h)
        return acts

    def _loss_grad(self, theta, Zs, Ys):
        acts = self._forward(Zs, theta)
        layers = self._layers(theta)
        n = Zs.shape[0]
        err = acts[-1] - Ys
        loss = float(np.mean(np.sum(err**2, axis=1)))
        delta = 2.0 * err / n
        grads = []
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            grads.append((delta.sum(axis=0), delta.T @ acts[i]))
            if i > 0:
                delta = (delta @ W) * (1.0 - acts[i] ** 2)
        flat = []
        for gb, gW in reversed(grads):
            flat.append(gW.ravel())
            flat.append(gb)
        return loss, np.concatenate(flat)

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        y = np.atleast_2d(y.T).T
        D = y.shape[1]
        if X.shape[1] <= D:
            raise ValueError("X must hold states followed by actions")
        self.state_dim = D
        self.action_dim = X.shape[1] - D
        self.sizes_ = np.array([X.shape[1], *[int(h) for h in self.hidden], D], dtype=np.int64)
        rng = np.random.default_rng(self.random_state)
        inc = y - X[:, :D]
        self.mu_in_ = X.mean(axis=0)
        self.s_in_ = np.maximum(X.std(axis=0), 1e-8)
        self.s_out_ = np.maximum(inc.std(axis=0), 1e-8)
        Zs = (X - self.mu_in_) / self.s_in_
        Ys = inc / self.s_out_
        theta = self._init_params(rng)
        opt = OptimizerState("adam", self.step_size, weight_decay=self.weight_decay)
        n = X.shape[0]
        self.loss_curve_ = []
        for _ in range(self.epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                loss, grad = self._loss_grad(theta, Zs[idx], Ys[idx])
                if not np.isfinite(loss):
                    raise TrainingFailure("training loss became non-finite")
                total += loss * idx.size
                opt, theta = apply_update(opt, theta, -grad)
            self.loss_curve_.append(total / n)
        self.theta_ = theta
        return self

    def predict(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X)
        D = self.state_dim
        out = self._forward((X - self.mu_in_) / self.s_in_)[-1]
        return X[:, :D] + out * self.s_out_

    # DifferentiableModel interface
    def predict_batch(self, X, U):
        return self.predict(np.hstack([np.atleast_2d(X), np.atleast_2d(U)]))

    def jacobians_batch(self, X, U):
        check_is_fitted(self, "theta_")
        Z = np.hstack([np.atleast_2d(np.asarray(X, dtype=float)), np.atleast_2d(np.asarray(U, dtype=float))])
        D = self.state_dim
        acts = self._forward((Z - self.mu_in_) / self.s_in_)
        layers = self._layers()
        # d out / d input, accumulated as (n, out, in)
        W_last = layers[-1][0]
        J = np.broadcast_to(W_last, (Z.shape[0],) + W_last.shape)
        for i in range(len(layers) - 2, -1, -1):
            J = J * (1.0 - acts[i + 1] ** 2)[:, None, :]
            J = J @ layers[i][0]
        J = J * (self.s_out_[:, None] / self.s_in_[None, :])
        J = J.transpose(0, 2, 1).copy()  # gradient layout (n, in, out)
        J[:, np.arange(D), np.arange(D)] += 1.0
        return J[:, :D], J[:, D:]

    def imagine(self, x0, U):
        check_is_fitted(self, "theta_")
        U = np.ascontiguousarray(np.asarray(U, dtype=float).reshape(-1, self.action_dim))
        return _mlp_imagine(self.theta_, self.sizes_, self.mu_in_, self.s_in_, self.s_out_,
                            np.asarray(x0, dtype=float), U)


def train_mlp_model(env, cfg=None, rng=None, counter=None):
    """Fit an :class:`MLPDynamics` on pink-noise rollouts of ``env``."""
    cfg = cfg or MlpConfig()
    rng = np.random.default_rng(rng)
    T, K = env.spec.horizon, env.spec.action_dim
    U = np.stack([pink_noise_sequence(T, K, cfg.noise_scale, rng) for _ in range(cfg.rollout_count)])
    states, *_ = rollout_many(env, U, counter)
    X = np.concatenate([states[:, :-1], U], axis=2).reshape(-1, env.spec.state_dim + K)
    y = states[:, 1:].reshape(-1, env.spec.state_dim)
    model = MLPDynamics(cfg.hidden, cfg.epochs, cfg.batch_size, cfg.step_size, cfg.weight_decay,
                        random_state=int(rng.integers(2**32)))
    return model.fit(X, y)


def save_mlp(model, path):
    """Flat binary: magic, int64 layer count and sizes, then float64 arrays."""
    check_is_fitted(model, "theta_")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<q", len(model.sizes_)))
        fh.write(np.asarray(model.sizes_, dtype="<i8").tobytes())
        for arr in (model.mu_in_, model.s_in_, model.s_out_, model.theta_):
            fh.write(np.asarray(arr, dtype="<f8").tobytes())


def load_mlp(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:16] != MAGIC:
        raise ValueError(f"{path}: not an MLP model file")
    (n,) = struct.unpack_from("<q", data, 16)
    off = 24
    sizes = np.frombuffer(data, dtype="<i8", count=n, offset=off).astype(np.int64)
    off += 8 * n
    n_in, D = int(sizes[0]), int(sizes[-1])
    n_theta = int(sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:])))

    def take(count):
        nonlocal off
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(float)
        off += 8 * count
        return arr

    model = MLPDynamics(hidden=tuple(int(s) for s in sizes[1:-1]))
    model.sizes_ = sizes
    model.state_dim = D
    model.action_dim = n_in - D
    model.mu_in_ = take(n_in)
    model.s_in_ = take(n_in)
    model.s_out_ = take(D)
    model.theta_ = take(n_theta)
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes in model file")
    return model
