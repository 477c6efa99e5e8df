"""End-to-end driver: mesh in, coarsen, solve flow, run transport, export.

Everything here is deterministic: the same configuration and mesh bytes
produce byte-identical CSV/JSON artifacts (no timestamps, fixed float
formatting), which keeps regression diffs meaningful.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from mdfrac import meshio
from mdfrac.coarsen import CoarseningReport, coarsen_grid
from mdfrac.config import BoundaryRule, SimulationConfig, load_config
from mdfrac.errors import ConfigError
from mdfrac.fv_transport import TransportParams, TransportResult, run_transport
from mdfrac.mdgrid import MixedDimGrid, attach_coupling
from mdfrac.structured import fractured_cube_grid, fractured_square_grid, load_segments
from mdfrac.vem_darcy import (
    ConservationReport,
    DarcyField,
    DarcyParams,
    check_conservation,
    project_velocity,
    solve_darcy,
)

log = logging.getLogger("mdfrac")

_REGION_AXIS = {
    "left": (0, "lo"),
    "right": (0, "hi"),
    "bottom": (1, "lo"),
    "top": (1, "hi"),
    "front": (2, "lo"),
    "back": (2, "hi"),
}
_REGION_ORDER = ("left", "right", "bottom", "top", "front", "back")


def build_grid(cfg: SimulationConfig) -> MixedDimGrid:
    m = cfg.mesh
    if m.kind == "msh":
        path = cfg.resolve(m.path)
        if not path.exists():
            raise ConfigError(f"mesh.path: file not found: {path}")
        return meshio.build_mixed_grid(str(path))
    if m.kind == "fractured_square":
        segments = []
        if m.segments:
            seg_path = cfg.resolve(m.segments)
            if not seg_path.exists():
                raise ConfigError(f"mesh.segments: file not found: {seg_path}")
            segments = load_segments(seg_path)
        return fractured_square_grid(m.n, segments)
    return fractured_cube_grid(m.n, axis=m.axis, offset=m.offset)


def coarsen_top_grid(
    md: MixedDimGrid, threshold: float, mode: str
) -> tuple[MixedDimGrid, CoarseningReport]:
    """Agglomerate the bulk grid and re-attach its fracture coupling.

    Fracture faces are single-sided after the coupling split, so merges can
    never cross a fracture; the interface facets survive agglomeration and
    the coarse bulk re-couples to the unchanged lower-dimensional grids.
    """
    top = md.top_dim
    coarse, report = coarsen_grid(md.grids[top], threshold, mode=mode)
    grids = dict(md.grids)
    grids[top] = coarse
    couplings = dict(md.couplings)
    if top - 1 in grids:
        couplings[top] = attach_coupling(coarse, grids[top - 1])
    return MixedDimGrid(grids, couplings), report


def darcy_params_from_config(cfg: SimulationConfig, md: MixedDimGrid) -> DarcyParams:
    """Effective (aperture-scaled) coefficients from the physical config.

    With aperture ``eps``, physical tangential fracture permeability ``kf``
    and normal permeability ``kn``:

    * tangential permeability of dimension ``d < N`` is ``kf * eps^(N-d)``
      (each reduced dimension integrates one aperture factor),
    * the Robin coefficient of the bulk/fracture coupling is ``2 kn / eps``
      (half-aperture resistance on each side),
    * deeper couplings use the tangential permeability of the higher grid
      divided by the half cross-section: ``2 kf * eps^(N-2-low)``.
    """
    N = md.top_dim
    eps = float(cfg.darcy.aperture)
    kf = float(cfg.darcy.fracture_permeability)
    kn = cfg.darcy.normal_perm
    Km = cfg.darcy.matrix_permeability
    perm = {}
    for d in md.dims:
        if d == N:
            perm[d] = np.asarray(Km, dtype=float) if isinstance(Km, list) else float(Km)
        else:
            perm[d] = kf * eps ** (N - d)
    coupling = {}
    for high in md.couplings:
        low = high - 1
        if low == N - 1:
            coupling[low] = 2.0 * kn / eps
        else:
            coupling[low] = 2.0 * kf * eps ** (N - 2 - low)
    return DarcyParams(
        permeability=perm, normal_coupling=coupling, bc=make_boundary_map(cfg, md)
    )


def make_boundary_map(cfg: SimulationConfig, md: MixedDimGrid):
    """Axis-aligned box sides -> boundary rules, as a bc callable.

    Prescribed-flux values are physical outward normal velocities; on
    lower-dimensional grids they are scaled by the aperture volume factor
    so a fracture inlet carries its cross-section share of the inflow.
    """
    g = md.grids[md.top_dim]
    lo = g.node_coords.min(axis=0)
    hi = g.node_coords.max(axis=0)
    tol = 1e-9 * max(float(np.max(hi - lo)), 1.0)
    rules = cfg.darcy.boundary
    default = rules.get("default", BoundaryRule("flux", 0.0))
    N = md.top_dim
    eps = float(cfg.darcy.aperture)

    def bc(d, x):
        rule = default
        for name in _REGION_ORDER:
            if name not in rules:
                continue
            axis, side = _REGION_AXIS[name]
            if axis >= x.size:
                continue
            bound = lo[axis] if side == "lo" else hi[axis]
            if abs(x[axis] - bound) <= tol:
                rule = rules[name]
                break
        if rule.kind == "flux" and d < N:
            return ("flux", rule.value * eps ** (N - d))
        return (rule.kind, rule.value)

    return bc


def transport_params_from_config(
    cfg: SimulationConfig, md: MixedDimGrid
) -> TransportParams:
    N = md.top_dim
    eps = float(cfg.darcy.aperture)
    t = cfg.transport
    return TransportParams(
        porosity={d: t.porosity for d in md.dims},
        aperture={d: eps ** (N - d) for d in md.dims},
        dt=t.dt,
        t_end=t.t_end,
        inflow_conc=t.inflow_concentration,
        initial_conc=t.initial_concentration,
    )


@dataclass
class RunResult:
    config: SimulationConfig
    md: MixedDimGrid
    darcy: DarcyField
    velocity: dict
    conservation: ConservationReport
    transport: Optional[TransportResult]
    coarsening: Optional[CoarseningReport]
    summary: dict
    output_dir: Path


def _summarize(cfg, md, field, cons, transport, coarsening) -> dict:
    lay = md.dof_layout
    summary = {
        "cells": {str(d): int(md.grids[d].num_cells) for d in md.dims},
        "dofs": int(lay.total),
        "solver": {
            "method": field.report.method,
            "residual": float(field.report.residual),
            "iterations": int(field.report.iterations or 0),
        },
        "conservation_residual": float(cons.max_residual),
        "pressure": {
            str(d): {
                "min": float(np.min(field.pressure[d])),
                "max": float(np.max(field.pressure[d])),
            }
            for d in md.dims
        },
    }
    if coarsening is not None:
        summary["coarsening"] = {
            "cells_before": int(coarsening.cells_before),
            "cells_after": int(coarsening.cells_after),
            "merges": int(coarsening.merges),
            "reduction": float(coarsening.reduction),
        }
    if transport is not None:
        summary["transport"] = {
            "steps": int(transport.final.step),
            "mass_balance_error": float(transport.mass_error),
            "courant": float(transport.courant),
            "production_total": float(transport.curve.cumulative[-1]),
        }
    return summary


def run(
    config: Union[SimulationConfig, str, Path],
    output_dir: Optional[Path] = None,
) -> RunResult:
    """Execute the full pipeline described by ``config`` and write artifacts.

    Artifacts land in the configured output directory: per-dimension VTU
    files of pressure and velocity magnitude, concentration snapshot series
    with a collection file, line-sample CSVs, a production-curve CSV, and a
    ``summary.json`` with the headline numbers.
    """
    cfg = config if isinstance(config, SimulationConfig) else load_config(config)

    md = build_grid(cfg)
    log.info("grid: %s", ", ".join(f"{md.grids[d].num_cells} {d}d" for d in md.dims))

    coarsening = None
    if cfg.coarsen.enabled:
        md, coarsening = coarsen_top_grid(md, cfg.coarsen.threshold, cfg.coarsen.mode)
        log.info(
            "coarsened bulk: %d -> %d cells",
            coarsening.cells_before,
            coarsening.cells_after,
        )

    params = darcy_params_from_config(cfg, md)
    field = solve_darcy(md, params, method=cfg.solver.method, tol=cfg.solver.tol)
    velocity = project_velocity(field, params)
    cons = check_conservation(field, params)
    log.info(
        "darcy solved: %d dofs, residual %.3e, conservation %.3e",
        md.dof_layout.total,
        field.report.residual,
        cons.max_residual,
    )

    out = Path(output_dir) if output_dir is not None else Path(cfg.output.directory)
    if not out.is_absolute():
        out = cfg.base_dir / out
    out.mkdir(parents=True, exist_ok=True)
    base = cfg.output.basename

    snapshots: list = []
    observers = []
    if cfg.transport.enabled and cfg.output.vtu and cfg.transport.snapshot_every > 0:
        every = cfg.transport.snapshot_every

        def snapshot(state):
            if state.step % every == 0:
                snapshots.extend(
                    meshio.export_vtu(
                        md,
                        out,
                        base + "_conc",
                        fields={
                            d: {"concentration": state.conc[d]} for d in md.dims
                        },
                        time=state.time,
                        step=state.step,
                    )
                )

        observers.append(snapshot)

    transport = None
    if cfg.transport.enabled:
        tparams = transport_params_from_config(cfg, md)
        transport = run_transport(
            md, field, tparams, observers=observers, darcy_params=params
        )
        log.info(
            "transport: %d steps, mass balance error %.3e",
            transport.final.step,
            transport.mass_error,
        )

    if cfg.output.vtu:
        fields = {
            d: {
                "pressure": field.pressure[d],
                "velocity_magnitude": np.linalg.norm(velocity[d], axis=1),
            }
            for d in md.dims
        }
        if transport is not None:
            for d in md.dims:
                fields[d]["concentration"] = transport.final.conc[d]
        meshio.export_vtu(md, out, base, fields=fields)
        if snapshots:
            meshio.write_pvd(out / (base + "_conc.pvd"), snapshots)

    top = md.grids[md.top_dim]
    for line in cfg.output.lines:
        sample_fields = {"pressure": field.pressure[md.top_dim]}
        if transport is not None:
            sample_fields["concentration"] = transport.final.conc[md.top_dim]
        sample = meshio.sample_over_line(
            top, sample_fields, line.start, line.end, num=line.num
        )
        columns = {"arclength": sample.arclength}
        for i, ax in enumerate("xyz"[: sample.points.shape[1]]):
            columns[ax] = sample.points[:, i]
        columns.update(sample.values)
        meshio.write_csv(out / f"{base}_line_{line.name}.csv", columns)

    if transport is not None:
        meshio.write_csv(
            out / f"{base}_production.csv",
            {
                "time": transport.curve.times,
                "instantaneous": transport.curve.rate,
                "cumulative": transport.curve.cumulative,
            },
        )

    summary = _summarize(cfg, md, field, cons, transport, coarsening)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return RunResult(
        config=cfg,
        md=md,
        darcy=field,
        velocity=velocity,
        conservation=cons,
        transport=transport,
        coarsening=coarsening,
        summary=summary,
        output_dir=out,
    )
