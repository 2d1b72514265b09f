import csv
import json

import pytest

from olrl.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, main, parse_seeds, parse_values
from olrl.harness import ConfigError


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"env": "lqr", "algorithm": "oracle", "N": 20, "eta": 0.05, "T": 6}))
    return p


def test_parse_seeds():
    assert parse_seeds("3") == [0, 1, 2]
    assert parse_seeds("4,7, 9") == [4, 7, 9]
    for bad in ("x", "", "-1,2", "0"):
        with pytest.raises(ConfigError):
            parse_seeds(bad)


def test_parse_values():
    assert parse_values("sigma", "1e-2,0.001") == [0.01, 0.001]
    assert parse_values("model", '"exact","mlp"') == ["exact", "mlp"]
    with pytest.raises(ConfigError):
        parse_values("nope", "1")
    with pytest.raises(ConfigError):
        parse_values("sigma", "abc")


def test_run_writes_outputs(tmp_path, cfg, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--seeds", "2", "--out", str(out)]) == EXIT_OK
    for name in ("curves.csv", "summary.csv", "curve_ci.csv", "config.json"):
        assert (out / name).exists()
    assert "solve rate" in capsys.readouterr().out


def test_run_thread_count_does_not_change_bytes(tmp_path, cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", str(cfg), "--seeds", "0,1,2", "--out", str(a), "--threads", "1"])
    main(["run", "--config", str(cfg), "--seeds", "0,1,2", "--out", str(b), "--threads", "2"])
    for name in ("curves.csv", "summary.csv", "curve_ci.csv", "config.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"alpha": 1.5}')
    assert main(["run", "--config", str(bad), "--seeds", "1", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "alpha" in capsys.readouterr().err
    bad.write_text('{\n "N": }')
    assert main(["run", "--config", str(bad), "--seeds", "1", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "bad.json:2:" in capsys.readouterr().err
    assert main(["run", "--seeds", "1", "--out", str(tmp_path / "o"), "--threads", "0"]) == EXIT_CONFIG


def test_failed_seeds_exit_1(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"env": "lqr", "algorithm": "oracle", "N": 5, "eta": 1e300,
                             "optimizer": "plain", "T": 4}))
    assert main(["run", "--config", str(p), "--seeds", "1", "--out", str(tmp_path / "o")]) == EXIT_FAILURE


def test_sweep(tmp_path, cfg):
    out = tmp_path / "sw"
    code = main(["sweep", "--config", str(cfg), "--seeds", "2", "--out", str(out),
                 "--key", "eta", "--values", "0.01,0.05"])
    assert code == EXIT_OK
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert [r["value"] for r in rows] == ["0.01", "0.05"]
    assert (out / "eta=0.01" / "curves.csv").exists()


def test_sweep_validates_every_value_first(tmp_path, cfg):
    out = tmp_path / "sw"
    code = main(["sweep", "--config", str(cfg), "--seeds", "1", "--out", str(out),
                 "--key", "alpha", "--values", "0.5,2.0"])
    assert code == EXIT_CONFIG
    assert not out.exists()


def test_check(tmp_path):
    out = tmp_path / "chk"
    assert main(["check", "--out", str(out), "--sequences", "2", "--instances", "2"]) == EXIT_OK
    rows = list(csv.DictReader(open(out / "checks.csv")))
    assert {r["check"] for r in rows} == {"gradient_pendulum", "gradient_lqr", "descent_bound_lqr"}
    assert all(r["passed"] == "1" for r in rows)
