import csv
import json

import numpy as np
import pytest

from olrl.algorithms import RunConfig
from olrl.harness import (
    ConfigError,
    ExperimentResult,
    SeedRun,
    bootstrap_ci,
    config_hash,
    emit_results,
    load_config,
    record_stride,
    run_experiment,
    run_seed,
)


def write(tmp_path, text, name="cfg.json"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# -- configuration ----------------------------------------------------------------

def test_load_config_table_values(tmp_path):
    p = write(tmp_path, json.dumps({"env": "pendulum", "algorithm": "off_trajectory", "N": 50000,
                                    "eta": 0.001, "sigma": 0.001, "alpha": 0.8, "q0": 0.001, "seed": 0}))
    cfg = load_config(p)
    assert (cfg.alpha, cfg.sigma, cfg.N) == (0.8, 0.001, 50000)


def test_load_config_empty_gives_defaults(tmp_path):
    assert load_config(write(tmp_path, "{}")) == RunConfig()


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match=r"alpha must lie in \(0,1\]"):
        load_config(write(tmp_path, '{"alpha": 1.5}'))
    with pytest.raises(ConfigError, match=r":2:"):
        load_config(write(tmp_path, '{\n  "alpha": ,\n}'))
    with pytest.raises(ConfigError, match="unknown"):
        load_config(write(tmp_path, '{"nonsense": 1}'))
    with pytest.raises(ConfigError, match="object"):
        load_config(write(tmp_path, "[1, 2]"))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_overrides_and_hash(tmp_path):
    p = write(tmp_path, '{"algorithm": "cem"}')
    a = load_config(p, {"sigma": 0.01})
    assert a.sigma == 0.01 and a.algorithm == "cem"
    assert config_hash(a) == config_hash(load_config(p, {"sigma": 0.01}))
    assert config_hash(a) != config_hash(load_config(p))


# -- statistics -------------------------------------------------------------------

def test_bootstrap_constant_and_single():
    assert bootstrap_ci([2.5] * 10) == (2.5, 2.5)
    assert bootstrap_ci([7.0]) == (7.0, 7.0)
    with pytest.raises(ValueError):
        bootstrap_ci([])


def test_bootstrap_binomial():
    lo, hi = bootstrap_ci([0.0] * 50 + [1.0] * 50, resamples=10_000, rng=0)
    assert lo == pytest.approx(0.40, abs=0.02)
    assert hi == pytest.approx(0.60, abs=0.02)


def test_bootstrap_deterministic_and_ordered():
    x = np.random.default_rng(0).normal(size=30)
    a = bootstrap_ci(x, rng=3)
    assert a == bootstrap_ci(x, rng=3)
    assert a[0] <= x.mean() <= a[1]


def test_record_stride():
    assert record_stride(2000) == 1
    assert record_stride(2001) == 2
    assert record_stride(50000) == 25


# -- experiments ------------------------------------------------------------------

def small_cfg(**kw):
    base = dict(env="lqr", algorithm="oracle", N=30, eta=0.05, lqr_state_dim=2, lqr_action_dim=1,
                T=8, threshold=-1e9)
    base.update(kw)
    return RunConfig(**base)


def test_single_seed_result():
    res = run_experiment(small_cfg(), [0])
    assert res.solve_rate in (0.0, 1.0)
    lo, hi = res.solve_rate_ci()
    assert lo == hi == res.solve_rate


def test_solve_rate_definition():
    runs = [SeedRun(i, np.arange(1), np.arange(1), np.array([j]), j, None)
            for i, j in enumerate([-0.01, -0.5, -0.02, -1.0])]
    res = ExperimentResult(RunConfig(), runs)
    assert res.solve_rate == 0.5
    lo, hi = res.solve_rate_ci()
    assert lo <= 0.5 <= hi


def test_seeds_are_independent_streams():
    a = run_seed(small_cfg(algorithm="on_trajectory", M=3), 0)
    b = run_seed(small_cfg(algorithm="on_trajectory", M=3), 1)
    c = run_seed(small_cfg(algorithm="on_trajectory", M=3), 0)
    assert not np.array_equal(a.J, b.J)
    assert np.array_equal(a.J, c.J)


def test_failed_seed_is_recorded():
    res = run_experiment(small_cfg(eta=1e300, optimizer="plain"), [0, 1])
    # each seed fails with its partial curve kept; the experiment still completes
    assert res.n_failed == 2
    assert all(r.J.size >= 1 and "non-finite" in r.error for r in res.runs)


def test_model_requires_pendulum():
    with pytest.raises(ConfigError):
        run_seed(small_cfg(algorithm="model_based", model="mlp"), 0)


def test_threads_do_not_change_results():
    cfg = small_cfg(algorithm="off_trajectory")
    a = run_experiment(cfg, [0, 1, 2], threads=1)
    b = run_experiment(cfg, [0, 1, 2], threads=2)
    for r, s in zip(a.runs, b.runs):
        assert np.array_equal(r.J, s.J)


# -- output -----------------------------------------------------------------------

def test_emit_results_roundtrip(tmp_path):
    res = run_experiment(small_cfg(threshold=-0.5), [0, 1])
    emit_results(res, tmp_path)
    with open(tmp_path / "curves.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["seed", "iteration", "rollouts", "J", "J_max"]
    for r in res.runs:
        J = np.array([float(row["J"]) for row in rows if int(row["seed"]) == r.seed])
        assert np.array_equal(J, r.J)  # 17 significant digits round-trip exactly
        Jm = np.array([float(row["J_max"]) for row in rows if int(row["seed"]) == r.seed])
        assert np.array_equal(Jm, np.maximum.accumulate(r.J))
    summary = {row["metric"]: row for row in csv.DictReader(open(tmp_path / "summary.csv"))}
    assert float(summary["solve_rate"]["value"]) == res.solve_rate
    assert float(summary["solve_rate"]["ci_lo"]) <= res.solve_rate <= float(summary["solve_rate"]["ci_hi"])
    echo = json.loads((tmp_path / "config.json").read_text())
    assert echo["config"]["algorithm"] == "oracle"
    assert echo["metadata"]["config_hash"] == config_hash(res.config)
    assert len(echo["per_seed"]) == 2


def test_emit_results_thins_long_runs(tmp_path):
    res = run_experiment(small_cfg(N=4001), [0])
    emit_results(res, tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "curves.csv")))
    its = [int(r["iteration"]) for r in rows]
    assert its[:3] == [0, 3, 6] and its[-1] == 4001


def test_emit_results_identical_bytes(tmp_path):
    cfg = small_cfg(algorithm="cem", M=4)
    emit_results(run_experiment(cfg, [0, 1]), tmp_path / "a")
    emit_results(run_experiment(cfg, [0, 1]), tmp_path / "b")
    for name in ("curves.csv", "summary.csv", "curve_ci.csv", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_emit_results_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit_results(run_experiment(small_cfg(N=2), [0]), blocker / "out")
