import csv
import json
import subprocess
import sys

import pytest

from nilsphere.cli import (
    EXPERIMENTS,
    ConfigError,
    list_experiments,
    main,
    resolve_threads,
    run,
    write_csv,
)


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    names = [e["name"] for e in list_experiments()]
    assert len(names) == 10 and names == sorted(names)
    for n in names:
        assert n in out


def test_verify_group_outputs(tmp_path, capsys):
    code = main(["verify-group", "--set", "trials=100", "--output-dir", str(tmp_path)])
    assert code == 0
    assert "PASS verify-group" in capsys.readouterr().out
    report = json.loads((tmp_path / "verify-group_report.json").read_text())
    assert report["passed"] and report["files"] == ["verify-group_identities.csv"]
    rows = list(csv.DictReader(open(tmp_path / "verify-group_identities.csv")))
    assert {r["identity"] for r in rows} == {"associativity", "inverse", "dilation", "rotation"}


def test_csv_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert main(["appendix-certificate", "--set", "trials=50", "--set", "grid=180",
                     "--output-dir", str(tmp_path / sub)]) == 0
    a = (tmp_path / "a" / "appendix-certificate_coefficients.csv").read_bytes()
    b = (tmp_path / "b" / "appendix-certificate_coefficients.csv").read_bytes()
    assert a == b


def test_csv_precision(tmp_path):
    write_csv(tmp_path / "t.csv", [{"x": 1 / 3, "flag": True, "n": 3}, {"x": 2e-20, "extra": None}])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines == ["x,flag,n,extra", "0.333333333333,true,3,", "2e-20,,,"]


def test_failed_check_exit_1(tmp_path):
    assert main(["verify-group", "--set", "trials=20", "--set", "tol=1e-300", "--output-dir", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "verify-group_report.json").read_text())["passed"] is False


def test_numeric_error_exit_1(tmp_path, capsys):
    code = main(["stationary-phase", "--set", "lam_list=[2048]", "--set", "control=false",
                 "--output-dir", str(tmp_path)])
    assert code == 1
    assert "QuadratureError" in capsys.readouterr().err
    assert "error" in json.loads((tmp_path / "stationary-phase_report.json").read_text())


@pytest.mark.parametrize("argv", [
    ["decay-slopes", "--set", "k_range=[3,12]"],
    ["decay-slopes", "--set", "method=power_iteration", "--set", "k_range=[3,6]",
     "--set", 'grid={"R_x": 3, "R_u": 3, "n_x": 41}'],
    ["verify-group", "--set", "bogus=1"],
    ["verify-group", "--group", "lorentz"],
    ["oscillatory-scaling", "--group", "appendix"],
    ["run"],
])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--output-dir", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_config_file_and_group_reference(tmp_path):
    (tmp_path / "group.json").write_text(json.dumps({"kind": "heisenberg", "n": 2}))
    cfg = {"experiment": "verify-group", "group": "group.json", "parameters": {"trials": 20},
           "output_dir": "out", "seed": 3}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert main(["run", "--config", str(tmp_path / "cfg.json")]) == 0
    report = json.loads((tmp_path / "out" / "verify-group_report.json").read_text())
    assert report["group"] == "H^2" and report["config"]["seed"] == 3


def test_schema_rejects_unknown_keys(tmp_path):
    with pytest.raises(ConfigError):
        run({"experiment": "verify-group", "colour": "red"}, tmp_path)
    with pytest.raises(ConfigError):
        run({"experiment": "not-an-experiment"}, tmp_path)


def test_mismatched_command(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"experiment": "fold-check"}))
    assert main(["verify-group", "--config", str(tmp_path / "cfg.json")]) == 2


def test_threads_resolution(monkeypatch):
    monkeypatch.setenv("NILSPHERE_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    monkeypatch.setenv("NILSPHERE_THREADS", "many")
    with pytest.raises(ConfigError):
        resolve_threads(None)
    monkeypatch.delenv("NILSPHERE_THREADS")
    assert resolve_threads(None) >= 1
    with pytest.raises(ConfigError):
        resolve_threads(0)


def test_threads_recorded(tmp_path):
    report, code = run({"experiment": "verify-group", "parameters": {"trials": 10}}, tmp_path, threads=1)
    assert code == 0 and report["threads"] == 1


def test_fold_check_with_control(tmp_path):
    report, code = run({"experiment": "fold-check", "parameters": {"n_points": 8}}, tmp_path)
    assert code == 0
    assert {c["name"] for c in report["checks"]} == {"rank", "fold_conditions", "abelian_control_fails"}


def test_every_experiment_has_defaults():
    for e in EXPERIMENTS.values():
        assert e.defaults and e.anchor


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "nilsphere.cli", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "verify-group" in res.stdout
