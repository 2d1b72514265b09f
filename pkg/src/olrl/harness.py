"""Seeded multi-run experiments, summary statistics and CSV output."""

from __future__ import annotations

import hashlib
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import RunConfig, make_optimizer_from_config
from .envs import RolloutCounter, pendulum_env, random_lqr
from .models import EnvModel, MlpConfig, PendulumModel, perturbed_pendulum_model, train_mlp_model

__all__ = [
    "ConfigError",
    "ExperimentResult",
    "SeedRun",
    "bootstrap_ci",
    "config_from_dict",
    "config_hash",
    "emit_results",
    "load_config",
    "make_env",
    "make_model",
    "record_stride",
    "run_experiment",
    "run_seed",
]


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


def load_config(path, overrides=None):
    """Parse a flat JSON object of :class:`RunConfig` fields.

    Missing keys take their defaults.  Syntax errors report line and column;
    unknown keys and invalid values raise :class:`ConfigError` naming the
    field.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8 ({exc.reason})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    data.update(overrides or {})
    return config_from_dict(data)


def config_from_dict(data):
    try:
        return RunConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(cfg):
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- construction -----------------------------------------------------------------

def make_env(cfg):
    if cfg.env == "pendulum":
        return pendulum_env(T=cfg.T)
    return random_lqr(cfg.lqr_state_dim, cfg.lqr_action_dim, cfg.T, cfg.env_seed)


def make_model(cfg, env, seed_seq, counter=None):
    """The differentiable model a model-based or planner run uses.

    ``perturbed`` draws log-normal parameter multipliers with scale
    ``cfg.model_scale``; ``mlp`` trains on pink-noise rollouts (added to
    ``counter``).  Both draw from ``seed_seq`` so paired runs share a model.
    """
    if cfg.model == "exact":
        return PendulumModel() if cfg.env == "pendulum" else EnvModel(env)
    if cfg.env != "pendulum":
        raise ConfigError(f"model {cfg.model!r} is only available for the pendulum")
    if cfg.model == "perturbed":
        return perturbed_pendulum_model(s=cfg.model_scale, rng_seed=seed_seq)
    return train_mlp_model(env, MlpConfig(), rng=seed_seq, counter=counter)


def _needs_model(cfg):
    return cfg.algorithm in ("model_based", "planner") and not cfg.oracle


@dataclass
class SeedRun:
    seed: int
    iterations: np.ndarray
    rollouts: np.ndarray
    J: np.ndarray
    J_max: float
    rollouts_to_solve: int | None
    model_rollouts: int = 0
    error: str | None = None

    @property
    def failed(self):
        return self.error is not None


def run_seed(cfg, seed):
    """One run; the RNG stream is ``SeedSequence([cfg.seed, seed])``."""
    ss = np.random.SeedSequence([cfg.seed, seed])
    opt_ss, model_ss = ss.spawn(2)
    empty = np.zeros(0)
    try:
        env = make_env(cfg)
        counter = RolloutCounter()
        model = make_model(cfg, env, model_ss, counter) if _needs_model(cfg) else None
        est = make_optimizer_from_config(cfg, opt_ss, model).fit(env)
    except ConfigError:
        raise
    except Exception as exc:  # recorded per seed; the experiment continues
        return SeedRun(seed, empty.astype(np.int64), empty.astype(np.int64), empty, -math.inf, None,
                       error=f"{type(exc).__name__}: {exc}")
    c = est.curve_
    return SeedRun(seed, c.iterations, c.rollouts, c.J, c.J_max, c.rollouts_to_solve(cfg.threshold),
                   counter.count, c.error)


def _run_seed_args(args):
    return run_seed(*args)


# -- statistics -------------------------------------------------------------------

def bootstrap_ci(samples, level=0.95, resamples=10000, rng=0):
    """Percentile bootstrap interval for the mean of ``samples``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("bootstrap_ci needs at least one sample")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    point = float(np.mean(x))
    if np.all(x == x[0]):
        return float(x[0]), float(x[0])
    rng = np.random.default_rng(rng)
    idx = rng.integers(0, x.size, size=(resamples, x.size))
    means = x[idx].mean(axis=1)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(min(lo, point)), float(max(hi, point))


@dataclass
class ExperimentResult:
    config: RunConfig
    runs: list
    metadata: dict = field(default_factory=dict)

    @property
    def seeds(self):
        return [r.seed for r in self.runs]

    @property
    def J_max(self):
        return np.array([r.J_max for r in self.runs])

    @property
    def solved(self):
        return np.array([r.J_max > self.config.threshold for r in self.runs])

    @property
    def solve_rate(self):
        return int(np.count_nonzero(self.solved)) / len(self.runs)

    @property
    def n_failed(self):
        return sum(r.failed for r in self.runs)

    def solve_rate_ci(self, level=0.95):
        return bootstrap_ci(self.solved.astype(float), level)

    def J_max_ci(self, level=0.95):
        finite = self.J_max[np.isfinite(self.J_max)]
        return bootstrap_ci(finite, level) if finite.size else (math.nan, math.nan)

    def mean_curve(self, level=0.95, resamples=1000):
        """Mean J across seeds per recorded iteration with a bootstrap interval.

        Seeds contribute at the iterations they recorded (the grid of the
        emitted curves); runs stopped early drop out afterwards.
        """
        stride = record_stride(self.config.N)
        rows = {}
        for r in self.runs:
            keep = _thin_mask(r.iterations, stride, self.config.N)
            for it, J in zip(r.iterations[keep], r.J[keep]):
                rows.setdefault(int(it), []).append(J)
        out = []
        for it in sorted(rows):
            lo, hi = bootstrap_ci(rows[it], level, resamples, rng=it)
            out.append((it, float(np.mean(rows[it])), lo, hi, len(rows[it])))
        return out


def run_experiment(cfg, seeds, threads=1):
    """Run ``cfg`` once per seed and collect the per-seed results.

    Seeds run in up to ``threads`` worker processes; results do not depend
    on the number of workers.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    if threads > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(seeds))) as pool:
            runs = list(pool.map(_run_seed_args, [(cfg, s) for s in seeds]))
    else:
        runs = [run_seed(cfg, s) for s in seeds]
    meta = {
        "config_hash": config_hash(cfg),
        "olrl_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "seeds": seeds,
    }
    return ExperimentResult(cfg, runs, meta)


# -- output -----------------------------------------------------------------------

def record_stride(N):
    """Every iteration for N <= 2000, else every ceil(N / 2000)."""
    return 1 if N <= 2000 else math.ceil(N / 2000)


def _thin_mask(iterations, stride, N):
    it = np.asarray(iterations)
    keep = it % stride == 0
    if it.size:
        keep[-1] = True
    return keep


def _num(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def emit_results(result, out_dir):
    """Write ``curves.csv``, ``summary.csv``, ``curve_ci.csv`` and ``config.json``.

    Returns the list of written paths.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create {out}: {exc.strerror}") from exc
    cfg = result.config
    stride = record_stride(cfg.N)

    lines = ["seed,iteration,rollouts,J,J_max"]
    for r in result.runs:
        running = np.maximum.accumulate(r.J) if r.J.size else r.J
        keep = _thin_mask(r.iterations, stride, cfg.N)
        for i in np.flatnonzero(keep):
            lines.append(",".join([str(r.seed), _num(r.iterations[i]), _num(r.rollouts[i]),
                                   _num(r.J[i]), _num(running[i])]))
    paths = [out / "curves.csv"]
    _write(paths[0], "\n".join(lines) + "\n")

    rows = ["metric,value,ci_lo,ci_hi"]
    lo, hi = result.solve_rate_ci()
    rows.append(f"solve_rate,{_num(result.solve_rate)},{_num(lo)},{_num(hi)}")
    finite = result.J_max[np.isfinite(result.J_max)]
    if finite.size:
        lo, hi = result.J_max_ci()
        rows.append(f"mean_J_max,{_num(finite.mean())},{_num(lo)},{_num(hi)}")
        rows.append(f"median_J_max,{_num(np.median(finite))},,")
    r2s = [r.rollouts_to_solve for r in result.runs if r.rollouts_to_solve is not None]
    if r2s:
        rows.append(f"median_rollouts_to_solve,{_num(float(np.median(r2s)))},,")
    rows.append(f"n_seeds,{len(result.runs)},,")
    rows.append(f"n_solved,{int(np.count_nonzero(result.solved))},,")
    rows.append(f"n_failed,{result.n_failed},,")
    paths.append(out / "summary.csv")
    _write(paths[-1], "\n".join(rows) + "\n")

    ci_rows = ["iteration,mean_J,ci_lo,ci_hi,n"]
    for it, m, lo, hi, n in result.mean_curve():
        ci_rows.append(f"{it},{_num(m)},{_num(lo)},{_num(hi)},{n}")
    paths.append(out / "curve_ci.csv")
    _write(paths[-1], "\n".join(ci_rows) + "\n")

    echo = {
        "config": cfg.to_dict(),
        "metadata": result.metadata,
        "per_seed": [
            {"seed": r.seed, "J_max": _json_float(r.J_max), "solved": bool(r.J_max > cfg.threshold),
             "rollouts_to_solve": r.rollouts_to_solve, "model_rollouts": r.model_rollouts,
             "error": r.error}
            for r in result.runs
        ],
    }
    paths.append(out / "config.json")
    _write(paths[-1], json.dumps(echo, indent=2, sort_keys=True) + "\n")
    return paths


def _json_float(x):
    return float(x) if math.isfinite(x) else None
