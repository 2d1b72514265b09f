"""Command-line entry point: ``olrl run | sweep | check``.

Exit status is 0 on success, 1 if any seed (or check) failed and 2 for
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .algorithms import OracleOptimizer, RunConfig
from .envs import pendulum_env, random_lqr
from .harness import ConfigError, config_from_dict, emit_results, load_config, run_experiment
from .theory import TheoryConstants, gradient_check, theorem1_report

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def parse_seeds(text):
    """``"20"`` means seeds 0..19; ``"3,5,8"`` is an explicit list."""
    text = text.strip()
    try:
        if "," in text:
            seeds = [int(s) for s in text.split(",") if s.strip()]
        else:
            seeds = list(range(int(text)))
    except ValueError:
        raise ConfigError(f"--seeds must be a count or a comma-separated list, got {text!r}") from None
    if not seeds or min(seeds) < 0:
        raise ConfigError("--seeds must name at least one non-negative seed")
    return seeds


def _field_type(key):
    for f in fields(RunConfig):
        if f.name == key:
            return f.type
    raise ConfigError(f"unknown config key(s): {key}")


def parse_values(key, text):
    """Sweep values as JSON scalars, e.g. ``1e-2,1e-3`` or ``"exact","mlp"``."""
    _field_type(key)
    try:
        return [json.loads(v) for v in text.split(",") if v.strip()]
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--values: {exc.msg} in {text!r}") from None


def _load(args, overrides=None):
    if args.config:
        return load_config(args.config, overrides)
    return config_from_dict(dict(overrides or {}))


def _report(result, out):
    cfg = result.config
    print(f"{cfg.algorithm} on {cfg.env}: solve rate {result.solve_rate:.3f} over "
          f"{len(result.runs)} seeds, median J_max {np.median(result.J_max):.6g} -> {out}")
    for r in result.runs:
        if r.failed:
            print(f"  seed {r.seed} failed: {r.error}", file=sys.stderr)


def cmd_run(args):
    cfg = _load(args)
    seeds = parse_seeds(args.seeds)
    result = run_experiment(cfg, seeds, args.threads)
    emit_results(result, args.out)
    _report(result, args.out)
    return EXIT_FAILURE if result.n_failed else EXIT_OK


def cmd_sweep(args):
    values = parse_values(args.key, args.values)
    seeds = parse_seeds(args.seeds)
    cfgs = [_load(args, {args.key: v}) for v in values]  # validate all before running
    out = Path(args.out)
    lines = ["key,value,solve_rate,ci_lo,ci_hi,median_J_max"]
    failed = False
    for v, cfg in zip(values, cfgs):
        result = run_experiment(cfg, seeds, args.threads)
        sub = out / f"{args.key}={v}"
        emit_results(result, sub)
        _report(result, sub)
        lo, hi = result.solve_rate_ci()
        lines.append(f"{args.key},{v},{result.solve_rate:.17g},{lo:.17g},{hi:.17g},"
                     f"{np.median(result.J_max):.17g}")
        failed |= result.n_failed > 0
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_FAILURE if failed else EXIT_OK


def run_checks(n_sequences=10, lqr_instances=10, seed=0):
    """Gradient and convergence-bound checks; yields ``(check, instance, value, limit, passed)``."""
    rng = np.random.default_rng(seed)
    env = pendulum_env()
    for i in range(n_sequences):
        U = rng.normal(0.0, 0.5, (env.spec.horizon, 1))
        err = gradient_check(env, U, h=1e-5).max_rel_error
        yield ("gradient_pendulum", i, err, 1e-4, err <= 1e-4)
    for i in range(lqr_instances):
        lqr = random_lqr(int(rng.integers(1, 5)), int(rng.integers(1, 3)), int(rng.integers(5, 21)), rng)
        U = rng.normal(0.0, 1.0, (lqr.spec.horizon, lqr.spec.action_dim))
        err = gradient_check(lqr, U, h=1e-5).max_rel_error
        yield ("gradient_lqr", i, err, 1e-4, err <= 1e-4)
        L = lqr.smoothness_constant()
        eta = 1.0 / L
        est = OracleOptimizer(n_steps=200, eta=eta, optimizer="plain", random_state=i,
                              record_gradients=True).fit(lqr)
        report = theorem1_report(est.curve_, TheoryConstants(0.0, 0.0, L, eta), lqr.optimal_return())
        margin = float(np.max(report.lhs / report.rhs)) if report.rhs > 0 else 0.0
        yield ("descent_bound_lqr", i, margin, 1.0, report.violations == 0)


def cmd_check(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["check,instance,value,limit,passed"]
    ok = True
    for name, i, value, limit, passed in run_checks(args.sequences, args.instances, args.seed):
        lines.append(f"{name},{i},{value:.17g},{limit:.17g},{int(passed)}")
        ok &= bool(passed)
        print(f"{name:18s} {i:3d}  {value:.3e}  {'ok' if passed else 'FAIL'}")
    (out / "checks.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK if ok else EXIT_FAILURE


def build_parser():
    p = argparse.ArgumentParser(prog="olrl", description="Open-loop trajectory optimization experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of run settings (defaults apply when omitted)")
        sp.add_argument("--seeds", default="20", help="seed count N or comma-separated list (default 20)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")

    common(sub.add_parser("run", help="run one configuration over several seeds"))
    sw = sub.add_parser("sweep", help="run a grid over one configuration key")
    common(sw)
    sw.add_argument("--key", required=True, help="configuration key to vary, e.g. sigma")
    sw.add_argument("--values", required=True, help="comma-separated JSON values")
    ck = sub.add_parser("check", help="gradient and convergence-bound checks")
    ck.add_argument("--out", required=True, help="output directory")
    ck.add_argument("--sequences", type=int, default=10, help="random pendulum action sequences")
    ck.add_argument("--instances", type=int, default=10, help="random LQR instances")
    ck.add_argument("--seed", type=int, default=0)
    ck.add_argument("--threads", type=int, default=1, help="accepted for symmetry; checks run serially")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    handler = {"run": cmd_run, "sweep": cmd_sweep, "check": cmd_check}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
