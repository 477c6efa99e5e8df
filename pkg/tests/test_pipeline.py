import json

import numpy as np
import pytest

from mdfrac import pipeline
from mdfrac.config import parse_config
from mdfrac.errors import ConfigError
from mdfrac.meshio import write_msh
from mdfrac.structured import as_gmsh

NETWORK = """
[mesh]
kind = "fractured_square"
n = 16
segments = "regular_network.txt"

[darcy]
fracture_permeability = 1.0e4
aperture = 1.0e-4

[darcy.boundary]
left = { kind = "flux", value = -1.0 }
right = { kind = "dirichlet", value = 1.0 }

[transport]
enabled = true
dt = 0.1
t_end = 0.3
snapshot_every = 3

[output]
directory = "out"
basename = "sim"

[[output.lines]]
name = "y07"
start = [0.0, 0.7]
end = [1.0, 0.7]
num = 40
"""


@pytest.fixture(scope="module")
def network_result(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("net")
    cfg = parse_config(NETWORK, base_dir=tmp)
    return pipeline.run(cfg, output_dir=tmp / "out")


def test_run_artifacts(network_result):
    res = network_result
    out = res.output_dir
    for name in (
        "sim_2d.vtu",
        "sim_1d.vtu",
        "sim_0d.vtu",
        "sim.pvd",
        "sim_conc.pvd",
        "sim_conc_2d_000000.vtu",
        "sim_conc_2d_000003.vtu",
        "sim_line_y07.csv",
        "sim_production.csv",
        "summary.json",
    ):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary == res.summary
    assert summary["cells"] == {"2": 512, "1": 56, "0": 9}
    assert summary["conservation_residual"] < 1e-9
    assert summary["solver"]["residual"] < 1e-9
    assert summary["transport"]["mass_balance_error"] < 1e-12


def test_run_pressure_ranges(network_result):
    p = network_result.summary["pressure"]
    # conductive regime: outlet pressure 1, inlet build-up below 1.6
    assert p["2"]["min"] > 0.98
    assert p["2"]["max"] < 1.632


def test_line_sample_csv(network_result):
    lines = (network_result.output_dir / "sim_line_y07.csv").read_text().splitlines()
    assert lines[0] == "arclength,x,y,pressure,concentration"
    assert len(lines) == 41
    pressures = [float(row.split(",")[3]) for row in lines[1:]]
    # left-to-right flow: pressure decreases monotonically up to wiggles
    assert pressures[0] > pressures[-1]
    assert abs(pressures[-1] - 1.0) < 0.05


def test_determinism(tmp_path):
    cfg1 = parse_config(NETWORK, base_dir=tmp_path)
    cfg2 = parse_config(NETWORK, base_dir=tmp_path)
    r1 = pipeline.run(cfg1, output_dir=tmp_path / "a")
    r2 = pipeline.run(cfg2, output_dir=tmp_path / "b")
    for name in ("summary.json", "sim_production.csv", "sim_line_y07.csv",
                 "sim_2d.vtu", "sim_1d.vtu"):
        b1 = (r1.output_dir / name).read_bytes()
        b2 = (r2.output_dir / name).read_bytes()
        assert b1 == b2, name


def test_coarsen_stage(tmp_path):
    text = NETWORK.replace(
        "[darcy]", "[coarsen]\nenabled = true\nthreshold = 1.0\n\n[darcy]"
    )
    cfg = parse_config(text, base_dir=tmp_path)
    res = pipeline.run(cfg, output_dir=tmp_path / "out")
    c = res.summary["coarsening"]
    assert c["cells_after"] < c["cells_before"]
    assert c["reduction"] >= 0.5
    assert res.summary["conservation_residual"] < 1e-9
    # fracture cells are untouched by bulk agglomeration
    assert res.summary["cells"]["1"] == 56
    assert res.summary["cells"]["0"] == 9


def test_fracture_inlet_flux_is_aperture_scaled():
    cfg = parse_config(NETWORK)
    md = pipeline.build_grid(
        parse_config(NETWORK.replace('segments = "regular_network.txt"', ""))
    )
    # boundary map alone: fracture shares of a prescribed-flux side scale
    # with the aperture volume factor of the dimension
    bc = pipeline.make_boundary_map(cfg, md)
    kind, value = bc(2, np.array([0.0, 0.3]))
    assert (kind, value) == ("flux", -1.0)
    kind, value = bc(1, np.array([0.0, 0.5]))
    assert kind == "flux" and value == pytest.approx(-1.0e-4)
    kind, value = bc(2, np.array([1.0, 0.3]))
    assert (kind, value) == ("dirichlet", 1.0)
    kind, value = bc(2, np.array([0.4, 1.0]))  # unspecified wall: no flow
    assert (kind, value) == ("flux", 0.0)


def test_effective_parameters():
    cfg = parse_config(NETWORK)  # segments resolve to the shipped geometry
    md = pipeline.build_grid(cfg)
    params = pipeline.darcy_params_from_config(cfg, md)
    assert params.permeability[2] == 1.0
    assert params.permeability[1] == pytest.approx(1.0)  # 1e4 * 1e-4
    assert params.permeability[0] == pytest.approx(1.0e-4)  # 1e4 * (1e-4)^2
    assert params.normal_coupling[1] == pytest.approx(2.0e8)  # 2 kn / eps
    assert params.normal_coupling[0] == pytest.approx(2.0e4)  # 2 kf
    assert params.normal_coupling[1] * cfg.darcy.aperture == pytest.approx(
        2 * cfg.darcy.normal_perm
    )


def test_msh_kind(tmp_path):
    mesh = as_gmsh(4, [((0.0, 0.5), (1.0, 0.5))])
    write_msh(mesh, tmp_path / "m.msh")
    cfg = parse_config(
        '[mesh]\nkind = "msh"\npath = "m.msh"\n'
        "[darcy]\nfracture_permeability = 1.0\naperture = 1.0e-2\n"
        '[darcy.boundary]\nleft = { kind = "dirichlet", value = 1.0 }\n'
        'right = { kind = "dirichlet", value = 0.0 }\n',
        base_dir=tmp_path,
    )
    res = pipeline.run(cfg, output_dir=tmp_path / "out")
    assert res.summary["cells"]["2"] == 32
    assert res.summary["cells"]["1"] == 4
    assert res.summary["conservation_residual"] < 1e-10


def test_missing_mesh_file(tmp_path):
    cfg = parse_config('[mesh]\nkind = "msh"\npath = "absent.msh"\n', base_dir=tmp_path)
    with pytest.raises(ConfigError, match="absent.msh"):
        pipeline.run(cfg, output_dir=tmp_path / "out")


def test_patch_test_preset(tmp_path):
    # the shipped sanity preset reproduces the linear field exactly
    from importlib import resources

    from mdfrac.config import load_config

    cfg = load_config(resources.files("mdfrac") / "geometries" / "patch_test.toml")
    res = pipeline.run(cfg, output_dir=tmp_path / "out")
    assert res.summary["conservation_residual"] <= 1e-9
    g = res.md.grids[2]
    exact = 1.0 - g.cell_centroid[:, 0]
    assert np.abs(res.darcy.pressure[2] - exact).max() < 1e-10
    line = (tmp_path / "out" / "patch_line_centerline.csv").read_text().splitlines()
    assert len(line) == 51


def test_cube_kind(tmp_path):
    cfg = parse_config(
        '[mesh]\nkind = "fractured_cube"\nn = 2\naxis = 0\noffset = 0.5\n'
        "[darcy]\nfracture_permeability = 1.0e2\naperture = 1.0e-2\n"
        '[darcy.boundary]\nleft = { kind = "dirichlet", value = 1.0 }\n'
        'right = { kind = "dirichlet", value = 0.0 }\n',
        base_dir=tmp_path,
    )
    res = pipeline.run(cfg, output_dir=tmp_path / "out")
    assert res.summary["cells"]["3"] == 48
    assert res.summary["cells"]["2"] == 8
    assert res.summary["conservation_residual"] < 1e-10
    assert (tmp_path / "out" / "sim_3d.vtu").exists()
