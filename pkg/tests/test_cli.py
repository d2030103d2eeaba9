import json
import subprocess
import sys

import pytest

from girderlab import cli
from girderlab import io as gio

STRIP = {"generator": {"name": "plate", "params": {
    "length": "1 m", "width": "0.1 m", "thickness": "10 mm", "nx": 8, "ny": 1,
    "supports": "strip", "load": "uniform", "load_value": "1 N",
    "material": {"law": "steel", "E": "200 GPa", "nu": 0.3, "fy": "345 MPa"}}},
    "design_capacity": "100 N",
    "control": {"control_node": 4, "dof": "uz", "step": "0.5 mm", "max_steps": 3}}

SOFTEN = {"scenario": {"name": "soft", "assumptions": ["whole plate at 80% stiffness"],
                       "operators": [{"kind": "stiffness_reduction", "fraction": 0.2,
                                      "region": {"tags": ["plate"]}}]}}


@pytest.fixture
def files(tmp_path):
    m = tmp_path / "strip.json"
    m.write_text(json.dumps(STRIP))
    s = tmp_path / "soft.json"
    s.write_text(json.dumps(SOFTEN))
    return m, s


def test_validate_ok(files, capsys):
    assert cli.main(["validate", "--model", str(files[0])]) == cli.EXIT_OK
    assert "valid" in capsys.readouterr().out


def test_validate_reports_diagnostics(tmp_path, capsys):
    bad = dict(STRIP, design_capacity="0 N")
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    assert cli.main(["validate", "--model", str(p)]) == cli.EXIT_FAIL
    assert "design capacity" in capsys.readouterr().err


def test_missing_file_and_syntax_error(tmp_path, capsys):
    assert cli.main(["validate", "--model", str(tmp_path / "none.json")]) == cli.EXIT_INPUT
    p = tmp_path / "broken.json"
    p.write_text('{"generator": }')
    assert cli.main(["validate", "--model", str(p)]) == cli.EXIT_INPUT
    assert f"{p}:1:15" in capsys.readouterr().err


def test_analyze_writes_outputs(files, tmp_path):
    out = tmp_path / "out"
    code = cli.main(["analyze", "--model", str(files[0]), "--scenario", str(files[1]),
                     "--out", str(out), "--convention", "intact"])
    assert code == cli.EXIT_OK
    for name in ("intact", "soft"):
        for f in ("curve.csv", "events.csv", "report.txt", "report.json"):
            assert (out / name / f).is_file()
    rep = json.loads((out / "soft" / "report.json").read_text())
    assert rep["performance_report"]["reduction_convention"] == "intact_denominator"
    assert rep["assumptions"] == ["whole plate at 80% stiffness"]
    assert rep["control"]["max_steps"] == 3
    table = (out / "comparison.txt").read_text().splitlines()
    assert table[0].startswith("Scenario") and table[-1].startswith("soft")
    # softer plate carries less load at the same displacement
    curve = lambda n: [float(l.split(",")[1]) for l in (out / n / "curve.csv").read_text().splitlines()[1:]]
    assert curve("soft")[-1] == pytest.approx(0.8 * curve("intact")[-1], rel=1e-3)


def test_analyze_overrides_and_duplicate_names(files, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["analyze", "--model", str(files[0]), "--out", str(out), "--max-steps", "1"]) == 0
    assert len((out / "intact" / "curve.csv").read_text().splitlines()) == 3
    code = cli.main(["analyze", "--model", str(files[0]), "--scenario", str(files[1]),
                     "--scenario", str(files[1]), "--out", str(out)])
    assert code == cli.EXIT_INPUT


def test_buckle(tmp_path):
    col = {"generator": {"name": "plate", "params": {
        "length": 1.0, "width": 0.1, "thickness": 0.01, "nx": 16, "ny": 1,
        "supports": "column", "load": "axial", "load_value": 1.0}}, "design_capacity": 1.0}
    p = tmp_path / "col.json"
    p.write_text(json.dumps(col))
    out = tmp_path / "b"
    assert cli.main(["buckle", "--model", str(p), "--modes", "2", "--out", str(out)]) == 0
    rows = (out / "modes.csv").read_text().splitlines()
    assert rows[0] == "mode,lambda,residual" and len(rows) == 3
    assert float(rows[1].split(",")[1]) < float(rows[2].split(",")[1])
    assert cli.main(["buckle", "--model", str(p), "--modes", "0", "--out", str(out)]) == 0
    assert (out / "modes.csv").read_text() == "mode,lambda,residual\n"
    assert cli.main(["buckle", "--model", str(p), "--modes", "-1", "--out", str(out)]) == cli.EXIT_INPUT


def test_buckle_tension_only_fails(tmp_path):
    ten = {"generator": {"name": "plate", "params": {
        "length": 1.0, "width": 0.1, "thickness": 0.01, "nx": 4, "ny": 1,
        "supports": "column", "load": "axial", "load_value": -1.0}}, "design_capacity": 1.0}
    p = tmp_path / "ten.json"
    p.write_text(json.dumps(ten))
    assert cli.main(["buckle", "--model", str(p), "--out", str(tmp_path / "x")]) == cli.EXIT_FAIL


def test_benchmarks_phase4(capsys, tmp_path):
    assert cli.main(["benchmarks", "--only", "phase4"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") >= 10
    g = json.loads(gio.data_path("table1_golden.json").read_text())
    g["rows"][1]["reserve_capacity"] = "2000 kN"
    p = tmp_path / "g.json"
    p.write_text(json.dumps(g))
    assert cli.main(["benchmarks", "--only", "phase4", "--golden", str(p)]) == cli.EXIT_FAIL
    assert cli.main(["benchmarks", "--only", "phase9"]) == cli.EXIT_FAIL


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "girderlab.cli", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "analyze" in r.stdout
