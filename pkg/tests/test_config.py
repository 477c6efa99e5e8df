from pathlib import Path

import pytest

from mdfrac.config import (
    SimulationConfig,
    dump_config,
    load_config,
    parse_config,
)
from mdfrac.errors import ConfigError

GEOMETRIES = Path(__file__).parent.parent / "src" / "mdfrac" / "geometries"

MINIMAL = """
[mesh]
kind = "fractured_square"
n = 4
"""


def test_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.mesh.kind == "fractured_square"
    assert cfg.mesh.n == 4
    assert cfg.coarsen.enabled is False
    assert cfg.transport.enabled is False
    assert cfg.solver.method == "direct"
    assert cfg.darcy.boundary == {}
    assert cfg.darcy.normal_perm == cfg.darcy.fracture_permeability


def test_unknown_section_and_key_name_their_path():
    with pytest.raises(ConfigError, match="physics: unknown section"):
        parse_config("[physics]\nx = 1\n")
    with pytest.raises(ConfigError, match=r"mesh\.resolution: unknown key"):
        parse_config("[mesh]\nresolution = 4\n")
    with pytest.raises(ConfigError, match=r"darcy\.boundary\.north"):
        parse_config(
            '[darcy.boundary]\nnorth = { kind = "flux", value = 0.0 }\n'
        )


def test_validation_errors():
    with pytest.raises(ConfigError, match=r"mesh\.kind"):
        parse_config('[mesh]\nkind = "voronoi"\n')
    with pytest.raises(ConfigError, match=r"mesh\.path"):
        parse_config('[mesh]\nkind = "msh"\n')
    with pytest.raises(ConfigError, match=r"darcy\.aperture"):
        parse_config(MINIMAL + "[darcy]\naperture = -1.0\n")
    with pytest.raises(ConfigError, match=r"coarsen\.mode"):
        parse_config(MINIMAL + '[coarsen]\nmode = "median"\n')
    with pytest.raises(ConfigError, match=r"transport\.dt"):
        parse_config(MINIMAL + "[transport]\nenabled = true\ndt = 0.0\n")
    with pytest.raises(ConfigError, match=r"inflow_concentration"):
        parse_config(
            MINIMAL + "[transport]\nenabled = true\ninflow_concentration = 2.0\n"
        )
    with pytest.raises(ConfigError, match=r"solver\.method"):
        parse_config(MINIMAL + '[solver]\nmethod = "multigrid"\n')
    with pytest.raises(ConfigError, match=r"lines\[0\]\.num"):
        parse_config(
            MINIMAL
            + "[[output.lines]]\nname = \"a\"\nstart = [0.0, 0.0]\n"
            + "end = [1.0, 1.0]\nnum = 1\n"
        )
    with pytest.raises(ConfigError, match="invalid TOML"):
        parse_config("mesh = [")


def test_boundary_rules_parse():
    cfg = parse_config(
        MINIMAL
        + '[darcy.boundary]\nleft = { kind = "flux", value = -1.0 }\n'
        + 'right = { kind = "dirichlet", value = 1.0 }\n'
    )
    assert cfg.darcy.boundary["left"].kind == "flux"
    assert cfg.darcy.boundary["left"].value == -1.0
    assert cfg.darcy.boundary["right"].kind == "dirichlet"
    with pytest.raises(ConfigError, match="robin"):
        parse_config(
            MINIMAL + '[darcy.boundary]\nleft = { kind = "robin", value = 0.0 }\n'
        )


def test_round_trip():
    text = (GEOMETRIES / "benchmark1_conductive.toml").read_text()
    cfg = parse_config(text, base_dir=GEOMETRIES)
    again = parse_config(dump_config(cfg), base_dir=GEOMETRIES)
    assert cfg == again
    # and a second serialization is stable
    assert dump_config(cfg) == dump_config(again)


def test_shipped_presets_load():
    for name in ("benchmark1_conductive.toml", "benchmark1_blocking.toml"):
        cfg = load_config(GEOMETRIES / name)
        assert cfg.mesh.kind == "fractured_square"
        assert cfg.mesh.n % 16 == 0
        seg = cfg.resolve(cfg.mesh.segments)
        assert seg.exists()
        assert len(seg.read_text().splitlines()) >= 6


def test_resolve_falls_back_to_shipped_geometries(tmp_path):
    cfg = parse_config(MINIMAL, base_dir=tmp_path)
    p = cfg.resolve("regular_network.txt")
    assert p.exists() and p.parent.name == "geometries"
    local = tmp_path / "regular_network.txt"
    local.write_text("0 0.5 1 0.5\n")
    assert cfg.resolve("regular_network.txt") == local


def test_load_config_missing_file(tmp_path):
    missing = tmp_path / "nope.toml"
    with pytest.raises(ConfigError, match="nope.toml"):
        load_config(missing)


def test_dump_default_round_trips():
    cfg = SimulationConfig()
    cfg.mesh.kind = "fractured_square"
    assert parse_config(dump_config(cfg)) == cfg
