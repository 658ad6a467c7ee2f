import csv
import json
import os

import pytest

from posorbit.cli import DEFAULTS, apply_overrides, load_config, main, report_digest
from posorbit.errors import ConfigError

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")
REPORT_KEYS = {"config", "checks", "thresholds", "degrees", "orbits", "provenance"}


def cfg_path(name):
    return os.path.join(CONFIGS, name)


def run_cli(tmp_path, *args):
    out = tmp_path / "out"
    status = main([*args, "--out", str(out)])
    report = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
    return status, report, out


# ---------------------------------------------------------------------------- configuration

def test_defaults_are_materialized():
    cfg = load_config(None)
    assert cfg == json.loads(json.dumps(DEFAULTS))
    assert cfg is not DEFAULTS


def test_unknown_key_is_an_error(tmp_path, capsys):
    with pytest.raises(ConfigError, match="system.lamda"):
        load_config(None, ["system.lamda=3"])
    assert main(["check", "--set", "system.lamda=3", "--out", str(tmp_path)]) == 1
    assert "lamda" in capsys.readouterr().err


def test_json_error_reports_position(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"system": {"lambda": 3,}}')
    with pytest.raises(ConfigError, match="line 1 column"):
        load_config(str(bad))


def test_overrides_parse_json_values():
    cfg = apply_overrides(load_config(None), ["system.lambda=75", "run.grid.counts=[4,4]", "output.csv=false"])
    assert cfg["system"]["lambda"] == 75 and cfg["run"]["grid"]["counts"] == [4, 4] and cfg["output"]["csv"] is False
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["novalue"])


def test_invalid_values(tmp_path):
    with pytest.raises(ConfigError):
        load_config(None, ["run.tol=-1"])
    status, report, _ = run_cli(tmp_path, "check", "--set", 'system.h={"family": "nope"}')
    assert status == 1 and report["provenance"]["errors"]


# ---------------------------------------------------------------------------- subcommands

def test_check_p1(tmp_path):
    status, report, _ = run_cli(tmp_path, "check", "--config", cfg_path("p1.json"))
    assert status == 0 and set(report) >= REPORT_KEYS
    verdicts = {k: v["verdict"] for k, v in report["checks"]["reports"].items()}
    for name in ("mean-negativity", "positivity-intervals", "superlinear-zero", "superlinear-infinity"):
        assert verdicts[name] == "pass"


def test_require_failed_condition_exits_2(tmp_path):
    status, report, _ = run_cli(tmp_path, "check", "--config", cfg_path("minkowski.json"),
                                "--set", "system.g.beta=3", "--require", "infinity")
    assert status == 2 and report["checks"]["required_failed"] == ["infinity"]
    status, _, _ = run_cli(tmp_path, "check", "--config", cfg_path("p1_plus.json"), "--require", "mean-negativity")
    assert status == 2


def test_require_unknown_condition(tmp_path):
    status, report, _ = run_cli(tmp_path, "check", "--require", "no-such-condition")
    assert status == 1


def test_degree_small_box(tmp_path):
    status, report, out = run_cli(tmp_path, "degree", "--config", cfg_path("p1.json"))
    assert status == 0 and report["degrees"]["small_averaged"]["degree"] == -1
    with open(out / "degree_small.csv") as fh:
        assert next(csv.reader(fh)) == ["s", "u", "v", "Fu", "Fv"]


def test_degree_ledger(tmp_path):
    status, report, out = run_cli(tmp_path, "degree", "--ledger", "--config", cfg_path("p1.json"))
    d = report["degrees"]
    assert status == 0 and d["certified"]
    assert (d["small_averaged"]["degree"], d["large_poincare"]["degree"], d["annulus"]) == (-1, 0, 1)
    assert (out / "ledger_large.csv").exists()


def test_solve_writes_orbits(tmp_path):
    status, report, out = run_cli(tmp_path, "solve", "--config", cfg_path("p1.json"),
                                  "--set", "run.grid.counts=[6,6]")
    assert status == 0 and len(report["orbits"]) == 1
    assert report["orbits"][0]["max_u"] == pytest.approx(0.51374587, abs=1e-7)
    assert (out / "orbit_0.csv").exists()
    with open(out / "orbits.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and float(rows[0]["u0"]) == pytest.approx(0.4125177318, abs=1e-8)


def test_continue_writes_branch(tmp_path):
    status, report, out = run_cli(tmp_path, "continue", "--config", cfg_path("p1.json"),
                                  "--set", "run.seed_point=[0.4125, 0.536]", "--set", "system.lambda_end=100")
    assert status == 0 and report["results"]["branch"]["reason"] == "range end"
    with open(out / "branch.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[-1]["lambda"]) == pytest.approx(100.0)


def test_period_map(tmp_path):
    status, report, out = run_cli(tmp_path, "period-map", "--set", "run.period_map.energies=[0.25]")
    assert status == 0
    assert report["results"]["period_map"]["table"][0][1] == pytest.approx(7.41630, abs=1e-3)
    assert (out / "period_map.csv").read_text().splitlines()[0] == "E,tau"


def test_thresholds_and_probe(tmp_path):
    status, report, _ = run_cli(tmp_path, "thresholds", "--config", cfg_path("p1.json"), "--set", "run.r0=0.01")
    assert status == 0
    assert report["thresholds"]["lambda_star"]["lambda_star"] == pytest.approx(10890.17672, rel=1e-8)
    status, report, _ = run_cli(tmp_path, "probe", "--set", "run.probe.r=0.001", "--set", "run.probe.theta_grid=[1.0]")
    assert status == 0 and report["results"]["probe"]["negative"]


def test_report_round_trip(tmp_path):
    status, first, _ = run_cli(tmp_path / "a", "check", "--config", cfg_path("pq_laplacian.json"))
    echoed = tmp_path / "echo.json"
    echoed.write_text(json.dumps(first["config"]))
    status2, second, _ = run_cli(tmp_path / "b", "check", "--config", str(echoed))
    assert status == status2 == 0
    assert report_digest(first) == report_digest(second)


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIGS)))
def test_every_fixture_checks_cleanly(tmp_path, name):
    status, report, _ = run_cli(tmp_path, "check", "--config", cfg_path(name))
    assert status == 0 and not report["provenance"].get("errors")
