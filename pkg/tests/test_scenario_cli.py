import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from hencky.cli import SOLVE_COLUMNS, main
from hencky.oracles import reduced_density_grid
from hencky.scenario import ScenarioError, parse_scenario, read_scenario
from hencky.tensor_core import Ball

SCEN = Path(__file__).resolve().parents[1] / "scenarios"


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- scenario parsing ------------------------------------------------------------


def test_parse_bundled_scenarios():
    for p in sorted(SCEN.glob("*.ini")):
        spec = read_scenario(p)
        assert spec.scenario.mesh.nc > 0


def test_parse_defaults():
    spec = parse_scenario("[mesh]\nm = 2\n")
    assert spec.scenario.datum.family == "zero"
    assert spec.solve.mode == "relaxed"
    assert spec.at_resolution(3).mesh.nc == 2 * 9


@pytest.mark.parametrize("text,line", [
    ("[mesh]\nm = 4\n[datum]\nfamily = affine\na = 1, 2\n", 5),
    ("[mesh]\nm = 4\ncolour = red\n", 3),
    ("[mesh]\nm = 4\n\n[bogus]\nx = 1\n", 4),
    ("[mesh]\nm = four\n", 2),
    ("[mesh]\nm = 4\n[yield]\nset = hexagon\n", 4),
    ("[mesh]\nm = 4\n[material]\nmu = -1\n", 4),
    ("[mesh]\nm = 4\n[datum]\nfamily = spiral\n", 4),
    ("[mesh]\nm = 4\nm = 5\n", 3),
])
def test_parse_error_reports_line(text, line):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text, "bad.ini")
    assert exc.value.line == line
    assert str(exc.value).startswith(f"bad.ini:{line}:")


def test_missing_mesh_section():
    with pytest.raises(ScenarioError):
        parse_scenario("[datum]\nfamily = zero\n")


# -- commands --------------------------------------------------------------------


def test_solve_affine_energy_matches_oracle(tmp_path):
    assert main(["solve", "--scenario", str(SCEN / "affine.ini"), "--levels", "4,8", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "solve.csv")
    assert [r["m"] for r in rows] == ["4", "8"]
    assert list(rows[0]) == list(SOLVE_COLUMNS)
    # [DERIVED] grid-search density of sym A = diag(0.2, -0.2) on the unit square
    ref = reduced_density_grid(np.diag([0.2, -0.2]), 1.0, 1.0, Ball(1.0, 2))
    assert ref == pytest.approx(0.08, rel=1e-8)
    for r in rows:
        assert float(r["energy"]) == pytest.approx(ref, rel=1e-3)
        assert r["converged"] == "True"
    info = json.loads((tmp_path / "solve.json").read_text())
    assert set(info) == {"4", "8"}


def test_solve_affine_above_yield(tmp_path):
    assert main(["solve", "--scenario", str(SCEN / "affine_slip.ini"), "--out", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "solve.csv")
    ref = reduced_density_grid(np.diag([2.0, -2.0]), 1.0, 1.0, Ball(1.0, 2))
    assert float(row["energy"]) == pytest.approx(ref, rel=1e-3)
    assert float(row["bulk"]) > 0


def test_solve_zero_datum_reports_zero(tmp_path):
    assert main(["solve", "--scenario", str(SCEN / "zero.ini"), "--out", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "solve.csv")
    for c in ("energy", "elastic", "bulk", "boundary", "lower_bound", "rel_gap", "oracle_energy"):
        assert float(row[c]) == 0.0


def test_solve_bad_scenario_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[mesh]\nm = 4\n[datum]\nfamily = affine\na = 1, 2\n")
    assert main(["solve", "--scenario", str(bad), "--out", str(tmp_path)]) == 2
    assert "bad.ini:5:" in capsys.readouterr().err


def test_mesh_gen(tmp_path):
    assert main(["mesh-gen", "--scenario", str(SCEN / "zero.ini"), "--levels", "2,3", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "mesh_m2.txt").exists() and (tmp_path / "mesh_m3.txt").exists()


@pytest.mark.parametrize("name,params,value", [
    ("reduced-density-grid", None, 5.0),
    ("support-vertices", None, 2.0),
    ("facet-slip-closed-form", {"sigma_y": 3.0}, 3.0 / np.sqrt(2)),
])
def test_oracle_command(tmp_path, name, params, value):
    argv = ["oracle", name, "--out", str(tmp_path)]
    if params:
        argv += ["--params", json.dumps(params)]
    assert main(argv) == 0
    res = json.loads((tmp_path / f"{name}.json").read_text())
    assert res["oracle"] == name
    assert res["value"] == pytest.approx(value, rel=1e-6)


def test_oracle_projection_is_in_set(tmp_path):
    assert main(["oracle", "projection-grid", "--out", str(tmp_path)]) == 0
    val = np.array(json.loads((tmp_path / "projection-grid.json").read_text())["value"])
    assert np.abs(val).max() <= 1 + 1e-6
    assert abs(np.trace(val)) < 1e-12


def test_selftest():
    assert main(["selftest"]) == 0


def test_gamma_check_elastic(tmp_path):
    argv = ["gamma-check", "--scenario", str(SCEN / "elastic.ini"), "--levels", "4", "--out", str(tmp_path)]
    assert main(argv) == 0
    (row,) = _rows(tmp_path / "gamma_check.csv")
    assert row["gap_decreasing"] == "True"
    assert float(row["final_gap"]) < 1e-3
    assert float(row["F_hard"]) >= float(row["G_min"]) - 1e-8
    assert (tmp_path / "recovery_m4.csv").exists()


def test_gamma_check_needs_full_dirichlet(tmp_path):
    sc = tmp_path / "part.ini"
    sc.write_text("[mesh]\nm = 4\ngamma0 = bottom\n[datum]\nfamily = shear\ngamma = 0.2\n")
    with pytest.raises(SystemExit):
        main(["gamma-check", "--scenario", str(sc), "--out", str(tmp_path)])


def test_outputs_are_byte_identical(tmp_path, monkeypatch):
    args = ["--scenario", str(SCEN / "affine_slip.ini"), "--levels", "4,6", "--seed", "7"]
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["solve", *args, "--out", str(a)]) == 0
    assert main(["solve", *args, "--out", str(b)]) == 0
    monkeypatch.setenv("HENCKY_WORKERS", "2")
    assert main(["solve", *args, "--out", str(c)]) == 0
    for f in ("solve.csv", "solve.json"):
        assert _sha(a / f) == _sha(b / f) == _sha(c / f)
