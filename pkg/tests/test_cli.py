import csv
import json
import math

import numpy as np
import pytest

from helm_sim.cli import main, parse_axis, settling_time
from helm_sim.config import ConfigError, bundled_scenario

CASE = bundled_scenario("case_study").read_text()


def scenario(tmp_path, text, name="s.toml"):
    f = tmp_path / name
    f.write_text(text)
    return str(f)


def test_check_case_study_is_clean(tmp_path, capsys):
    assert main(["check", "case_study", "--out", str(tmp_path)]) == 0
    assert "tube" in capsys.readouterr().out
    rep = json.loads((tmp_path / "feasibility.json").read_text())
    assert rep["passed"] is True


@pytest.mark.parametrize(
    "old, new",
    [
        ("u_rd = 5.0", "u_rd = 3.0"),  # propulsion margin violated
        ("x = 700.0\ny = 10.0", "x = 0.0\ny = 900.0"),  # starts outside the tube
        ("radius = 400.0", "radius = 5.0"),  # curvature too large for the gains
    ],
)
def test_check_refusals(tmp_path, old, new):
    assert old in CASE
    assert main(["check", scenario(tmp_path, CASE.replace(old, new))]) == 2


def test_check_malformed_toml(tmp_path, capsys):
    assert main(["check", scenario(tmp_path, CASE.replace("Vx = -1.0", "Vx = "))]) == 1
    assert "parse error at line" in capsys.readouterr().err


def test_usage_errors():
    assert main(["frobnicate", "case_study"]) == 1
    assert main(["run"]) == 1
    assert main(["check", "case_study", "--dt", "-0.1"]) == 1


def test_run_writes_artifacts(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "case_study", "--out", str(out), "--t-end", "3"]) == 0
    for name in ("timeseries.csv", "monitor.json", "trajectory.svg", "errors.svg", "estimates.svg",
                 "velocities.svg", "cr.svg"):  # fmt: skip
        assert (out / name).stat().st_size > 0, name
    assert (out / "trajectory.svg").read_text().lstrip().startswith("<?xml")
    mon = json.loads((out / "monitor.json").read_text())
    assert mon["clean"] and mon["t_final"] == pytest.approx(3.0)


def test_dt_override(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "case_study", "--out", str(out), "--t-end", "1", "--dt", "0.05", "--no-plots"]) == 0
    rows = list(csv.DictReader(open(out / "timeseries.csv")))
    assert json.loads((out / "monitor.json").read_text())["steps"] == 20
    assert float(rows[-1]["t"]) == pytest.approx(1.0)


def test_run_refused_then_forced_fault(tmp_path):
    path = scenario(tmp_path, CASE.replace("x = 700.0\ny = 10.0", "x = 0.0\ny = 10.0"))
    assert main(["run", path, "--out", str(tmp_path / "a"), "--t-end", "5"]) == 2
    assert (tmp_path / "a" / "feasibility.json").exists()
    assert main(["run", path, "--out", str(tmp_path / "b"), "--t-end", "5", "--force", "--no-plots"]) == 3
    mon = json.loads((tmp_path / "b" / "monitor.json").read_text())
    assert mon["aborted"] and mon["faults"][0]["kind"] == "condition1"


def test_sweep_is_independent_of_thread_count(tmp_path, monkeypatch):
    args = ["sweep", "case_study", "--t-end", "4", "--axis", "current_angle=0:270:4", "--axis", "guidance.Delta=40,80"]
    monkeypatch.setenv("HELM_SIM_THREADS", "1")
    assert main([*args, "--out", str(tmp_path / "one")]) == 0
    monkeypatch.setenv("HELM_SIM_THREADS", "3")
    assert main([*args, "--out", str(tmp_path / "three")]) == 0
    one = (tmp_path / "one" / "summary.csv").read_text()
    assert one == (tmp_path / "three" / "summary.csv").read_text()
    rows = list(csv.DictReader(one.splitlines()))
    assert len(rows) == 8 and all(r["clean"] == "true" for r in rows)
    assert [float(r["current_angle"]) for r in rows[::2]] == [0.0, 90.0, 180.0, 270.0]
    for i in range(8):
        a = (tmp_path / "one" / f"cell_{i:03d}" / "timeseries.csv").read_bytes()
        assert a == (tmp_path / "three" / f"cell_{i:03d}" / "timeseries.csv").read_bytes()


def test_empty_sweep_matches_run(tmp_path):
    assert main(["run", "case_study", "--out", str(tmp_path / "run"), "--t-end", "2", "--no-plots"]) == 0
    assert main(["sweep", "case_study", "--out", str(tmp_path / "sw"), "--t-end", "2"]) == 0
    a = (tmp_path / "run" / "timeseries.csv").read_bytes()
    assert a == (tmp_path / "sw" / "cell_000" / "timeseries.csv").read_bytes()
    assert (tmp_path / "run" / "monitor.json").read_text() == (tmp_path / "sw" / "cell_000" / "monitor.json").read_text()
    assert len((tmp_path / "sw" / "summary.csv").read_text().splitlines()) == 2


def test_sweep_records_refused_cells(tmp_path):
    code = main(["sweep", "case_study", "--out", str(tmp_path), "--t-end", "1", "--axis", "u_rd=3,5"])
    assert code == 3
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert [r["exit_code"] for r in rows] == ["2", "0"]
    assert rows[0]["faults"] == "refused"


def test_parse_axis():
    assert parse_axis("guidance.Delta=20,40") == ("guidance.Delta", [20.0, 40.0])
    assert parse_axis("current_angle=0:90:3") == ("current_angle", [0.0, 45.0, 90.0])
    with pytest.raises(ConfigError):
        parse_axis("Delta")
    with pytest.raises(ConfigError):
        parse_axis("Delta=a,b")


def test_settling_time():
    t = np.arange(5.0)
    assert settling_time(t, np.array([3.0, 2.0, 0.5, 0.1, 0.0]), 1.0) == 2.0
    assert settling_time(t, np.zeros(5), 1.0) == 0.0
    assert math.isnan(settling_time(t, np.full(5, 2.0), 1.0))
