import csv
import json

import numpy as np
import pytest

from vnls_lab import cli
from vnls_lab import darboux as db
from vnls_lab.cli import ConfigError
from vnls_lab.lax_core import FieldGrid


def run(tmp_path, *argv):
    return cli.main(["--output-dir", str(tmp_path), *argv])


def test_export_import_round_trip_is_bit_exact(tmp_path):
    f = db.soliton_closure(db.make_spec(3, -1, [(0.3 + 1j, [1, 0.5j, 1])]), "single")
    g = FieldGrid.centered(f, (-3, 3), 0.1, 0.2, 1e-3, 3)
    path = tmp_path / "field.csv"
    cli.export_grid(g, path, 3, -1, "test")
    back, meta = cli.import_grid(path)
    assert np.array_equal(back.values, g.values)
    assert (back.x0, back.dx, back.nx, back.t0, back.dt, back.nt) == (g.x0, g.dx, g.nx, g.t0, g.dt, g.nt)
    assert meta["N"] == 3 and meta["kappa"] == -1 and meta["provenance"] == "test"


def test_export_zero_grid(tmp_path):
    g = FieldGrid(0.0, 0.5, 5, 0.0, 0.1, 3, np.zeros((3, 5, 2), complex))
    path = tmp_path / "zero.csv"
    cli.export_grid(g, path, 3, 1)
    rows = [r for r in csv.reader(l for l in path.open() if not l.startswith("#"))]
    assert rows[0] == ["x", "t", "re_u1", "im_u1", "re_u2", "im_u2"]
    assert all(float(v) == 0 for r in rows[1:] for v in r[2:])


@pytest.mark.parametrize(
    "text, expected",
    [("0.3,1", 0.3 + 1j), ("0.3+1j", 0.3 + 1j), (" -2 ", -2), ("1j", 1j)],
)
def test_parse_complex(text, expected):
    assert cli.parse_complex(text) == expected


@pytest.mark.parametrize("bad", ["1,2,3", "abc", "1,x"])
def test_parse_complex_rejects(bad):
    with pytest.raises(ConfigError):
        cli.parse_complex(bad)


def test_parse_pole():
    mu, C = cli.parse_pole("mu:0.5,1;C:1,2j,-1")
    assert mu == 0.5 + 1j
    assert C == [1, 2j, -1]
    with pytest.raises(ConfigError):
        cli.parse_pole("mu:0,1")


def test_parse_grid():
    assert cli.parse_grid("-1,1,0.5,0,0.2,0.1") == (-1, 0.5, 5, 0, 0.1, 3)
    with pytest.raises(ConfigError):
        cli.parse_grid("1,-1,0.5,0,0.2,0.1")


def test_parse_branch():
    assert cli.parse_branch("auto") is None
    assert cli.parse_branch("+") == 1
    assert cli.parse_branch("-1") == -1
    with pytest.raises(ConfigError):
        cli.parse_branch("up")


def test_soliton_command_writes_peak(tmp_path):
    assert run(tmp_path, "soliton", "--grid=-20,20,0.001,0,0,0.01") == 0
    with (tmp_path / "modulus.csv").open() as fh:
        peak = max(float(r["modulus"]) for r in csv.DictReader(fh))
    assert peak == pytest.approx(1.0, abs=1e-10)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] and summary["command"] == "soliton"


def test_soliton_verify_and_field_file(tmp_path):
    assert run(tmp_path, "soliton", "--grid=-4,4,0.1,-0.01,0.01,0.01", "--verify") == 0
    grid, meta = cli.import_grid(tmp_path / "field.csv")
    assert meta["provenance"] == "soliton/single"
    assert grid.values.shape == (3, 81, 1)


def test_summary_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["lattice", "--sites", "8", "--T", "0.1", "--dt", "0.01", "--seed", "3"]
    assert run(a, *argv) == run(b, *argv)
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    assert "started" in json.loads((a / "run_meta.json").read_text())


@pytest.mark.parametrize(
    "argv",
    [
        ["soliton", "--kappa", "2"],
        ["soliton", "--poles", "mu:0,1"],
        ["soliton", "--grid", "0,1"],
        ["glm-check", "--terms", "3"],
        ["accept", "--criteria", "13"],
        ["nonsense"],
    ],
)
def test_usage_errors_exit_2(tmp_path, argv):
    assert run(tmp_path, *argv) == 2


def test_invalid_pole_geometry_exits_2(tmp_path):
    assert run(tmp_path, "soliton", "--poles", "mu:1,0;C:1,1") == 2


def test_check_commands(tmp_path):
    assert run(tmp_path, "glm-check") == 0
    assert run(tmp_path, "bt-check", "--branch", "-") == 0
    assert run(tmp_path, "bt-check", "--branch", "+") == 1


def test_zcc_command_reports_reference_equations(tmp_path):
    argv = ["zcc-check", "--sites", "10", "--defect-site", "6", "--lam", "2", "--mu", "2"]
    assert run(tmp_path, *argv) == 1
    assert run(tmp_path, *argv, "--corrected") == 0


def test_config_file_supplies_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sites": 8, "T": 0.05, "dt": 0.01, "seed": 5}))
    assert run(tmp_path, "--config", str(cfg), "lattice", "--seed", "6") == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["sites"] == 8
    assert summary["config"]["seed"] == 6
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run(tmp_path, "--config", str(cfg), "lattice") == 2
