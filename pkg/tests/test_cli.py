import json
import os
import subprocess
import sys

import pytest

from parlab.cli import main, parse_gen
from parlab.errors import ConfigError
from parlab.geometry import build_annulus_mesh, save_mesh

CAP_ANNULUS = 9.064720283654388


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    return code, out


def test_parse_gen():
    assert parse_gen("annulus:a=1,b=2,h=0.1") == ("annulus", {"a": "1", "b": "2", "h": "0.1"})
    assert parse_gen("stock:name=h2") == ("stock", {"name": "h2"})
    with pytest.raises(ConfigError):
        parse_gen("disk:radius")


def test_capacity_from_generator(tmp_path):
    code, out = run(tmp_path, "capacity", "--gen", "annulus:a=1,b=2,h=0.05")
    assert code == 0
    doc = json.loads((out / "capacity.json").read_text())
    assert doc["value"] == pytest.approx(CAP_ANNULUS, rel=1e-3)
    rows = (out / "potential.csv").read_text().splitlines()
    assert rows[0] == "vertex,value" and len(rows) == doc["n_vertices"] + 1
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["command"] == "capacity" and cfg["gen"] == "annulus:a=1,b=2,h=0.05"


def test_capacity_from_mesh_file_and_config(tmp_path):
    mesh = tmp_path / "annulus.json"
    save_mesh(build_annulus_mesh(1.0, 2.0, 0.1), mesh)
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"mesh": str(mesh), "K_marker": "inner"}))
    code, out = run(tmp_path, "capacity", "--config", str(conf))
    assert code == 0
    assert json.loads((out / "capacity.json").read_text())["value"] == pytest.approx(CAP_ANNULUS, rel=5e-3)


def test_absolute_capacity_of_model(tmp_path):
    code, out = run(tmp_path, "capacity", "--gen", "model:kind=hyperbolic")
    assert code == 0
    assert json.loads((out / "capacity.json").read_text())["classification"] == "PositiveLimit"
    assert (out / "exhaustion.csv").read_text().startswith("j,outer_radius,capacity,potential_at_o")


@pytest.mark.parametrize(
    "args",
    [
        ["capacity"],
        ["capacity", "--gen", "torus:r=1"],
        ["capacity", "--gen", "annulus:a=1,b=2"],
        ["capacity", "--mesh", "/nonexistent/mesh.json"],
        ["capacity", "--gen", "annulus:a=1,b=2,h=0.1", "--tol", "-1"],
        ["classify", "--gen", "stock:name=h2", "--method", "walk"],
        ["classify", "--gen", "stock:name=h2", "--method", "magic"],
        ["classify", "--gen", "stock:name=nowhere"],
        ["reproduce", "fermat"],
        ["reproduce", "ahlfors", "--exhaustion", "2,0.5,3"],
        ["frobnicate"],
    ],
)
def test_configuration_errors_exit_3_without_output(tmp_path, args):
    code, out = run(tmp_path, *args)
    assert code == 3
    assert not out.exists()


def test_solver_errors_exit_2(tmp_path):
    code, out = run(tmp_path, "capacity", "--gen", "annulus:a=1,b=2,h=0.1", "--config", str(_conf(tmp_path, K_marker="outer")))
    assert code == 2 and not out.exists()


def _conf(tmp_path, **doc):
    p = tmp_path / "conf.json"
    p.write_text(json.dumps(doc))
    return p


def test_failed_reproduction_exits_1_without_output(tmp_path, capsys):
    # a three-member exhaustion is too short for the gap to fall below 1e-2
    code, out = run(tmp_path, "reproduce", "ahlfors", "--exhaustion", "2,1.5,3")
    assert code == 1 and not out.exists()
    assert "assertion failed" in capsys.readouterr().err


def test_reproduce_writes_report(tmp_path):
    code, out = run(tmp_path, "reproduce", "--theorem", "ahlfors")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and rep["theorem"] == "ahlfors"
    assert (out / "ahlfors.csv").exists()


def test_classify_methods(tmp_path):
    code, out = run(tmp_path, "classify", "--gen", "stock:name=half-plane", "--method", "volume,capacity")
    assert code == 0
    res = json.loads((out / "classification.json").read_text())["results"]
    assert res["volume"]["verdict"] == "Parabolic" and res["capacity"]["verdict"] == "Parabolic"
    assert (out / "evidence_capacity.csv").exists()


def test_walk_output_is_reproducible(tmp_path):
    args = ["classify", "--gen", "model:kind=euclidean,n_theta=16", "--method", "walk", "--seed", "3", "--trials", "2000"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "walk.json").read_bytes() == (tmp_path / "b" / "walk.json").read_bytes()
    assert json.loads((tmp_path / "a" / "walk.json").read_text())["seed"] == 3


def test_rerun_replaces_outputs(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert main(["capacity", "--gen", "annulus:a=1,b=2,h=0.2", "--out", str(out)]) == 0
    assert (out / "keep.txt").exists() and (out / "capacity.json").exists()
    assert not [p for p in os.listdir(tmp_path) if p.startswith(".parlab-")]


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "parlab.cli", "capacity", "--gen", "annulus:a=1,b=2,h=0.2",
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == str(tmp_path / "o")
