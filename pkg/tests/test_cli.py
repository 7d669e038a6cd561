import dataclasses
import json
import math
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest
import trimesh
from click.testing import CliRunner

from trajectoid import cli
from trajectoid.cli import dumps17, main
from trajectoid.mesh_forge import read_stl
from trajectoid.path_model import dump_path_csv, gen_fourier_random, gen_v_path, load_path_csv


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def fourier_csv(tmp_path):
    f = tmp_path / "fourier.csv"
    f.write_text(dump_path_csv(gen_fourier_random(0)))
    return str(f)


@pytest.fixture
def v_csv(tmp_path):
    f = tmp_path / "v.csv"
    f.write_text(dump_path_csv(gen_v_path(1.0, 1.0)))
    return str(f)


def test_dumps17_round_trips_floats():
    x = 0.1 + 0.2
    text = dumps17({"a": x, "b": [1, 2.5, float("nan")], "c": None, "d": True, "e": "s"})
    data = json.loads(text)
    assert data["a"] == x and data["b"] == [1, 2.5, None] and data["d"] is True
    assert "0.30000000000000004" in text


def test_analyze_v_path(runner, v_csv):
    res = runner.invoke(main, ["analyze", "--input", v_csv])
    assert res.exit_code == 0
    data = json.loads(res.output)
    assert data["index"] == pytest.approx(0.25)
    assert data["delta_psi"] == pytest.approx(math.pi / 2)
    assert data["L"] == pytest.approx(2 * math.sqrt(2))


def test_malformed_input_exit_2(runner, tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("0,0\n1,1\n2,zz\n")
    res = runner.invoke(main, ["analyze", "--input", str(f)])
    assert res.exit_code == 2
    assert "line 3" in res.output


def test_missing_file_exit_2(runner, tmp_path):
    res = runner.invoke(main, ["analyze", "--input", str(tmp_path / "nope.csv")])
    assert res.exit_code == 2


def test_bad_sigma_range_exit_2(runner, v_csv):
    res = runner.invoke(main, ["solve", "--input", v_csv, "--sigma-min", "2", "--sigma-max", "1"])
    assert res.exit_code == 2


def test_solve_v_path_n1(runner, v_csv):
    res = runner.invoke(main, ["solve", "--input", v_csv, "--n", "1", "--sigma-max", "4"])
    assert res.exit_code == 0
    sig = [s["sigma"] for s in json.loads(res.output)["solutions"]]
    assert np.allclose(sig[:2], [2.0, 4.0], atol=1e-9)


def test_solve_floats_have_17_digits(runner, v_csv):
    res = runner.invoke(main, ["solve", "--input", v_csv, "--n", "1", "--sigma-max", "4"])
    m = re.search(r'"r": ([0-9.e+-]+)', res.output)
    assert len(m.group(1).replace(".", "").lstrip("0").split("e")[0]) == 17


def test_solve_no_solution_exit_3(runner, tmp_path):
    f = tmp_path / "line.csv"
    f.write_text("0,0\n1,0\n")
    res = runner.invoke(main, ["solve", "--input", str(f), "--n", "1", "--sigma-min", "0.1", "--sigma-max", "0.9"])
    assert res.exit_code == 3
    assert json.loads(res.output.split("Error")[0])["solutions"] == []


def test_solve_minimal_n(runner, fourier_csv):
    res = runner.invoke(main, ["solve", "--input", fourier_csv, "--n-max", "4"])
    assert res.exit_code == 0
    data = json.loads(res.output)
    assert data["n"] == 2 and data["solutions"]


def test_solve_is_deterministic(runner, fourier_csv):
    a = runner.invoke(main, ["solve", "--input", fourier_csv, "--n", "2"]).output
    b = runner.invoke(main, ["solve", "--input", fourier_csv, "--n", "2"]).output
    assert a == b


def test_scan_writes_files(runner, fourier_csv, tmp_path):
    out = tmp_path / "scan"
    res = runner.invoke(main, ["scan", "--input", fourier_csv, "--grid", "300", "--n-max", "3", "--bound", "1.5", "--out", str(out)])
    assert res.exit_code == 0
    rows = (out / "scan.csv").read_text().splitlines()
    assert len(rows) >= 301
    for name in ("scan_phi.svg", "scan_area.svg"):
        root = ET.fromstring((out / name).read_text())
        assert root.tag.endswith("svg")
    assert "<circle" in (out / "scan_phi.svg").read_text()


def test_mesh_writes_valid_stl(runner, fourier_csv, tmp_path):
    out = tmp_path / "mesh"
    res = runner.invoke(main, ["mesh", "--input", fourier_csv, "--n", "2", "--subdiv", "3", "--obj", "--out", str(out)])
    assert res.exit_code == 0, res.output
    v, f, _ = read_stl((out / "trajectoid.stl").read_bytes())
    m = trimesh.Trimesh(v, f)
    assert m.is_watertight and m.is_volume
    meta = json.loads((out / "trajectoid.json").read_text())
    assert meta["verification"]["passed"] and meta["n"] == 2 and meta["cut_count"] <= 2000
    assert (out / "trace.csv").read_text().startswith("t,x,y,z")
    assert (out / "trajectoid.obj").exists()


def test_mesh_with_cavity(runner, fourier_csv, tmp_path):
    out = tmp_path / "cav"
    res = runner.invoke(main, ["mesh", "--input", fourier_csv, "--n", "2", "--subdiv", "3", "--cavity", "0.6", "--out", str(out)])
    assert res.exit_code == 0, res.output
    v, f, _ = read_stl((out / "trajectoid.stl").read_bytes())
    assert trimesh.Trimesh(v, f).is_watertight
    assert json.loads((out / "trajectoid.json").read_text())["cavity_volume"] > 0


def test_mesh_refuses_failed_verification(runner, fourier_csv, tmp_path, monkeypatch):
    real = cli.verify_trace_support

    def broken(solid, trace):
        return dataclasses.replace(real(solid, trace), passed=False)

    monkeypatch.setattr(cli, "verify_trace_support", broken)
    out = tmp_path / "fail"
    res = runner.invoke(main, ["mesh", "--input", fourier_csv, "--n", "2", "--subdiv", "2", "--out", str(out)])
    assert res.exit_code == 1
    assert not (out / "trajectoid.stl").exists()
    res = runner.invoke(main, ["mesh", "--input", fourier_csv, "--n", "2", "--subdiv", "2", "--no-verify", "--out", str(out)])
    assert res.exit_code == 0
    assert (out / "trajectoid.stl").exists()


@pytest.mark.parametrize("args", [["--shell-ratio", "1.0"], ["--subdiv", "9"], ["--cavity", "1.5"]])
def test_mesh_rejects_bad_options(runner, fourier_csv, tmp_path, args):
    res = runner.invoke(main, ["mesh", "--input", fourier_csv, "--n", "2", "--out", str(tmp_path), *args])
    assert res.exit_code == 2


def test_mesh_pick_out_of_range(runner, fourier_csv, tmp_path):
    res = runner.invoke(main, ["mesh", "--input", fourier_csv, "--n", "2", "--pick", "99", "--out", str(tmp_path)])
    assert res.exit_code == 2


def test_verify_report(runner, fourier_csv, tmp_path):
    res = runner.invoke(main, ["verify", "--input", fourier_csv, "--n", "2", "--subdiv", "3", "--periods", "6", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["passed"] and rep["replay"]["closure_periods"] == [2, 4, 6]
    assert (tmp_path / "replay.csv").read_text().startswith("s,x,y")


def test_verify_without_mesh(runner, fourier_csv, tmp_path):
    res = runner.invoke(main, ["verify", "--input", fourier_csv, "--n", "2", "--no-mesh", "--out", str(tmp_path)])
    assert res.exit_code == 0
    assert json.loads((tmp_path / "report.json").read_text())["support"] is None


@pytest.mark.parametrize("kind", ["v", "wedge", "zigzag", "fourier", "polyline"])
def test_gen_outputs_parse(runner, kind):
    res = runner.invoke(main, ["gen", kind])
    assert res.exit_code == 0
    assert len(load_path_csv(res.output)) >= 3


def test_gen_rejects_bad_parameters(runner):
    assert runner.invoke(main, ["gen", "wedge", "--beta", "2.0"]).exit_code == 2
    assert runner.invoke(main, ["gen", "v", "--x", "-1"]).exit_code == 2


def test_gen_to_file_and_back(runner, tmp_path):
    f = tmp_path / "z.csv"
    assert runner.invoke(main, ["gen", "zigzag", "--beta", "1.5707963267948966", "--out", str(f)]).exit_code == 0
    assert np.allclose(load_path_csv(f.read_text()).vertices[-1], [2.0, -1.0])


def test_probe_fraction(runner, tmp_path):
    res = runner.invoke(main, ["probe", "--seeds", "3", "--wedges", "2", "--grid", "800", "--out", str(tmp_path)])
    assert res.exit_code == 0
    rows = (tmp_path / "probe.csv").read_text().splitlines()
    assert rows[0] == "kind,seed,found,count,first_sigma"
    assert len(rows) == 1 + 5 + 1
    _, frac, hits, total = rows[-1].split(",")
    assert int(total) == 5 and float(frac) == pytest.approx(int(hits) / 5)
    assert sum(int(r.split(",")[2]) for r in rows[1:-1]) == int(hits)


def test_version(runner):
    res = runner.invoke(main, ["--version"])
    assert res.exit_code == 0


@pytest.fixture
def line_csv(tmp_path):
    f = tmp_path / "line.csv"
    f.write_text("0,0\n1,0\n")
    return str(f)


def test_analyze_square_loop(runner, tmp_path):
    f = tmp_path / "sq.csv"
    f.write_text("0,0\n1,0\n1,1\n0,1\n0,0\n1,0\n")
    data = json.loads(runner.invoke(main, ["analyze", "--input", str(f)]).output)
    assert data["delta_psi"] == pytest.approx(2 * math.pi)


def test_scan_straight_triangle_wave_with_gaps(runner, line_csv, tmp_path):
    out = tmp_path / "s"
    res = runner.invoke(main, ["scan", "--input", line_csv, "--sigma-min", "0.1", "--sigma-max", "2.1", "--grid", "201", "--out", str(out)])
    assert res.exit_code == 0
    rows = [r.split(",") for r in (out / "scan.csv").read_text().splitlines()[1:]]
    sig = np.array([float(r[0]) for r in rows])
    phi = np.array([float(r[1]) for r in rows])
    assert np.max(np.abs(phi - np.abs(np.remainder(2 * math.pi * sig + math.pi, 2 * math.pi) - math.pi))) < 1e-10
    # sigma = 0.5, 1.5 are antipodal rows, drawn as breaks in the area curve
    assert sum(int(r[3]) for r in rows) >= 2
    assert (out / "scan_area.svg").read_text().count("<polyline") >= 3


def test_scan_wedge_bound_overlay(runner, tmp_path):
    f = tmp_path / "w.csv"
    assert runner.invoke(main, ["gen", "wedge", "--beta", "0.5", "--out", str(f)]).exit_code == 0
    out = tmp_path / "s"
    res = runner.invoke(main, ["scan", "--input", str(f), "--grid", "400", "--bound", "1.0", "--out", str(out)])
    assert res.exit_code == 0
    phi = [float(r.split(",")[1]) for r in (out / "scan.csv").read_text().splitlines()[1:]]
    assert max(phi) <= 1.0 + 1e-8
    assert "bound" in (out / "scan_phi.svg").read_text()


def test_mesh_straight_band(runner, line_csv, tmp_path):
    out = tmp_path / "band"
    res = runner.invoke(main, ["mesh", "--input", line_csv, "--n", "1", "--sigma-min", "0.5", "--sigma-max", "1.5",
                               "--subdiv", "3", "--out", str(out)])
    assert res.exit_code == 0, res.output
    meta = json.loads((out / "trajectoid.json").read_text())
    assert meta["n"] == 1 and meta["sigma"] == pytest.approx(1.0, abs=1e-12)
    assert meta["r"] == pytest.approx(1 / (2 * math.pi))
    v, f, _ = read_stl((out / "trajectoid.stl").read_bytes())
    m = trimesh.Trimesh(v, f)
    assert m.is_watertight
    # cut band: every direction in the rolling plane rests at height r
    ang = np.linspace(0, 2 * math.pi, 200)
    band = np.column_stack([np.cos(ang), np.zeros_like(ang), np.sin(ang)])
    assert np.max(v @ band.T, axis=0).max() <= meta["r"] * 1.001


def test_mesh_no_verify_records_warning(runner, fourier_csv, tmp_path):
    res = runner.invoke(main, ["mesh", "--input", fourier_csv, "--n", "2", "--subdiv", "2", "--no-verify", "--out", str(tmp_path)])
    assert res.exit_code == 0
    meta = json.loads((tmp_path / "trajectoid.json").read_text())
    assert "warning" in meta and "verification" not in meta


def test_probe_is_deterministic(runner, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert runner.invoke(main, ["probe", "--seeds", "2", "--grid", "500", "--out", str(d)]).exit_code == 0
    assert (a / "probe.csv").read_text() == (b / "probe.csv").read_text()
