import json
from pathlib import Path

import pytest

from mdfrac.cli import main
from mdfrac.meshio import write_msh
from mdfrac.structured import as_gmsh

CONFIG = """
[mesh]
kind = "fractured_square"
n = 8
segments = "net.txt"

[darcy]
fracture_permeability = 1.0e2
aperture = 1.0e-2

[darcy.boundary]
left = { kind = "dirichlet", value = 1.0 }
right = { kind = "dirichlet", value = 0.0 }

[transport]
enabled = true
dt = 0.1
t_end = 0.3

[output]
directory = "out"
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "cfg.toml").write_text(CONFIG)
    (tmp_path / "net.txt").write_text("0.25 0.5 1 0.5\n")
    return tmp_path


def test_run_command(workdir, capsys):
    rc = main(["run", str(workdir / "cfg.toml"), "--out", str(workdir / "res")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "pressure 2d" in out
    assert "artifacts written" in out
    summary = json.loads((workdir / "res" / "summary.json").read_text())
    assert summary["solver"]["residual"] < 1e-9


def test_run_missing_config(tmp_path, capsys):
    rc = main(["run", str(tmp_path / "absent.toml")])
    assert rc == 1
    assert "absent.toml" in capsys.readouterr().err


def test_run_missing_mesh(workdir, capsys):
    (workdir / "cfg.toml").write_text('[mesh]\nkind = "msh"\npath = "gone.msh"\n')
    rc = main(["run", str(workdir / "cfg.toml")])
    assert rc == 1
    assert "gone.msh" in capsys.readouterr().err


def test_global_flags_both_positions(workdir):
    assert main(["--log-level", "error", "run", str(workdir / "cfg.toml"),
                 "--out", str(workdir / "r1")]) == 0
    assert main(["run", str(workdir / "cfg.toml"), "--out", str(workdir / "r2"),
                 "--log-level", "error", "--threads", "1"]) == 0


def test_coarsen_command(workdir, tmp_path, capsys):
    mesh = as_gmsh(8, [((0.0, 0.5), (1.0, 0.5))])
    write_msh(mesh, tmp_path / "m.msh")
    out = tmp_path / "co"
    rc = main(["coarsen", str(tmp_path / "m.msh"), "--threshold", "1.0",
               "--out", str(out)])
    assert rc == 0
    assert "reduction" in capsys.readouterr().out
    assert (out / "partition.csv").exists()
    assert (out / "coarse_2d.vtu").exists()
    report = json.loads((out / "summary.json").read_text())
    assert report["cells_after"] < report["cells_before"]


def test_coarsen_zero_threshold_identity(tmp_path):
    mesh = as_gmsh(4, [])
    write_msh(mesh, tmp_path / "m.msh")
    out = tmp_path / "co"
    rc = main(["coarsen", str(tmp_path / "m.msh"), "--threshold", "0", "--out", str(out)])
    assert rc == 0
    rows = (out / "partition.csv").read_text().splitlines()[1:]
    assert all(r.split(",")[0] == r.split(",")[1] for r in rows)
    report = json.loads((out / "summary.json").read_text())
    assert report["merges"] == 0 and report["reduction"] == 0.0


def test_coarsen_invalid_threshold(tmp_path, capsys):
    mesh = as_gmsh(4, [])
    write_msh(mesh, tmp_path / "m.msh")
    rc = main(["coarsen", str(tmp_path / "m.msh"), "--threshold", "-1",
               "--out", str(tmp_path / "co")])
    assert rc == 1
    assert "threshold" in capsys.readouterr().err


def test_coarsen_missing_mesh(tmp_path, capsys):
    rc = main(["coarsen", str(tmp_path / "nope.msh"), "--threshold", "1",
               "--out", str(tmp_path / "co")])
    assert rc == 1
    assert "nope.msh" in capsys.readouterr().err


def test_study_time_command(workdir, capsys):
    rc = main(["study", str(workdir / "cfg.toml"), "--mode", "time",
               "--levels", "3", "--out", str(workdir / "st")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "fitted order" in out
    csv = (workdir / "st" / "study_time.csv").read_text().splitlines()
    assert csv[0] == "level,resolution,conc_l2"
    assert len(csv) == 4


def test_study_space_command(workdir, capsys):
    rc = main(["study", str(workdir / "cfg.toml"), "--mode", "space",
               "--levels", "3", "--out", str(workdir / "st")])
    assert rc == 0
    assert "fitted order" in capsys.readouterr().out
    assert (workdir / "st" / "study_space.csv").exists()


def test_study_too_few_levels(workdir, capsys):
    rc = main(["study", str(workdir / "cfg.toml"), "--mode", "time", "--levels", "2"])
    assert rc == 1
    assert "levels" in capsys.readouterr().err


def test_study_rejects_unknown_mode(workdir):
    with pytest.raises(SystemExit):
        main(["study", str(workdir / "cfg.toml"), "--mode", "hp"])
