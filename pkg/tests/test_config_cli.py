import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from edfrac import benchmarks
from edfrac.cli import main
from edfrac.config import from_dict, load_config


def test_config_json_round_trip(tmp_path):
    cfg = benchmarks.uniaxial_cyclic()
    path = tmp_path / "cfg.json"
    cfg.to_json(path)
    back = load_config(path)
    assert back.name == cfg.name
    assert back.material == cfg.material
    assert back.analysis == cfg.analysis
    assert back.bcs == cfg.bcs
    assert back.kappa0 == cfg.kappa0


def test_config_round_trip_with_thermal_and_zigzag(tmp_path):
    cfg = benchmarks.thermal_shock(2.0)
    path = tmp_path / "cfg.json"
    cfg.to_json(path)
    back = load_config(path)
    assert back.thermal == cfg.thermal
    assert back.law.kind == "zigzag"
    assert back.law.gfn_segments == cfg.law.gfn_segments


def test_config_infinite_cutoff_round_trip(tmp_path):
    cfg = benchmarks.kalthoff("strain", 0)
    path = tmp_path / "cfg.json"
    cfg.to_json(path)
    back = load_config(path)
    vel = [b for b in back.bcs if b.kind == "velocity"]
    assert vel and vel[0].v0 == 16.5e3


def test_builtin_registry():
    names = set(benchmarks.BUILTINS)
    assert {"uniaxial_cyclic", "four_point_bending", "kalthoff_strain_coarse",
            "dens_model_A", "dens_model_B", "sens",
            "thermal_shock_a2"} <= names
    with pytest.raises(KeyError):
        benchmarks.get("nope")


def test_cli_mesh_gen(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"generator": "rectangle", "length": 10.0,
                                "height": 5.0, "nx": 2, "ny": 1,
                                "thickness": 1.0}))
    out = tmp_path / "mesh.json"
    rc = main(["mesh-gen", str(spec), "--out", str(out)])
    assert rc == 0
    data = json.loads(out.read_text())
    assert len(data["elements"]) == 2


def test_cli_law_trace(tmp_path):
    cfg = {
        "sigma_u": 3.0, "g_f": 0.2, "kappa0": 1e-5, "k_full_soft": 1e-5,
        "mode": "normal", "substeps": 50,
        "history": [[0.0, 0.0], [1.0, 0.1], [2.0, 0.0], [3.0, 0.5]],
    }
    path = tmp_path / "trace.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "trace.csv"
    rc = main(["law-trace", str(path), "--out", str(out)])
    assert rc == 0
    rows = list(csv.DictReader(out.open()))
    assert set(rows[0]) == {"t", "u", "traction", "xi", "Q"}
    xi = [float(r["xi"]) for r in rows]
    assert all(b >= a - 1e-15 for a, b in zip(xi, xi[1:]))  # monotone history
    # the peak traction stays at or below the strength
    assert max(float(r["traction"]) for r in rows) <= 3.0 + 1e-9


def test_cli_run_writes_outputs(tmp_path):
    cfg = benchmarks.uniaxial_cyclic()
    cfg.analysis.segments = [(1.0, 30)]   # cut the protocol short for speed
    cfg.output.every = 10
    path = tmp_path / "cfg.json"
    cfg.to_json(path)
    out = tmp_path / "out"
    rc = main(["run", str(path), "--out", str(out)])
    assert rc == 0
    history = (out / "history.csv").read_text().splitlines()
    assert history[0].startswith("step,t,u_ctrl,reaction")
    assert len(history) == 31
    assert (out / "nucleation_log.csv").exists()
    frames = sorted(out.glob("frame_*.vtk"))
    assert frames and frames[0].name == "frame_00000.vtk"


def test_cli_entrypoint_subprocess(tmp_path):
    out = subprocess.run([sys.executable, "-m", "edfrac.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "law-trace" in out.stdout and "mesh-gen" in out.stdout
