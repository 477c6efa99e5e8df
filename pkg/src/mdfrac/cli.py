"""Command-line entry points: run, coarsen, study.

    mdfrac run <config.toml> [--out DIR]
    mdfrac coarsen <mesh.msh> --threshold V [--mode M] --out DIR
    mdfrac study <config.toml> --mode {space,time} [--levels K]

Global flags: ``--log-level`` and ``--threads`` (caps the BLAS thread pools
used by the sparse solvers; assembly itself is deterministic and serial).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from mdfrac.errors import MdfracError

log = logging.getLogger("mdfrac")


def _set_threads(n: int) -> None:
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(n)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except ImportError:
        pass  # env vars still cover subprocesses and late-loading pools


def _cmd_run(args) -> int:
    from mdfrac import pipeline

    out = Path(args.out) if args.out else None
    result = pipeline.run(args.config, output_dir=out)
    s = result.summary
    print(f"cells: {s['cells']}  dofs: {s['dofs']}")
    print(
        f"solver residual: {s['solver']['residual']:.3e}  "
        f"conservation: {s['conservation_residual']:.3e}"
    )
    for d, rng in sorted(s["pressure"].items(), reverse=True):
        print(f"pressure {d}d: [{rng['min']:.6g}, {rng['max']:.6g}]")
    if "transport" in s:
        t = s["transport"]
        print(
            f"transport: {t['steps']} steps, production {t['production_total']:.6g}, "
            f"mass balance error {t['mass_balance_error']:.3e}"
        )
    print(f"artifacts written to {result.output_dir}")
    return 0


def _cmd_coarsen(args) -> int:
    from mdfrac import meshio
    from mdfrac.coarsen import coarsen_grid
    from mdfrac.errors import ConfigError

    if args.threshold < 0:
        raise ConfigError(f"--threshold must be >= 0, got {args.threshold}")
    mesh_path = Path(args.mesh)
    if not mesh_path.exists():
        raise ConfigError(f"mesh file not found: {mesh_path}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    md = meshio.build_mixed_grid(str(mesh_path))
    top = md.top_dim
    fine = md.grids[top]

    if args.threshold == 0:  # no-op: identity partition, grid unchanged
        coarse = fine
        cell_map = np.arange(fine.num_cells)
        report = {
            "cells_before": int(fine.num_cells),
            "cells_after": int(fine.num_cells),
            "merges": 0,
            "reduction": 0.0,
        }
    else:
        coarse, rep = coarsen_grid(fine, args.threshold, mode=args.mode)
        cell_map = rep.cell_map
        report = {
            "cells_before": int(rep.cells_before),
            "cells_after": int(rep.cells_after),
            "merges": int(rep.merges),
            "reduction": float(rep.reduction),
        }
    log.info(
        "coarsened %s: %d -> %d cells",
        mesh_path.name,
        report["cells_before"],
        report["cells_after"],
    )

    meshio.write_csv(
        out / "partition.csv",
        {
            "fine_cell": np.arange(len(cell_map)),
            "coarse_cell": np.asarray(cell_map),
        },
    )
    meshio.write_vtu(
        coarse, out / f"coarse_{top}d.vtu", {"measure": coarse.cell_measure}
    )
    meshio.write_vtu(
        fine,
        out / f"fine_{top}d.vtu",
        {"partition": np.asarray(cell_map), "measure": fine.cell_measure},
    )
    for d in md.dims:
        if d != top:
            meshio.write_vtu(md.grids[d], out / f"fine_{d}d.vtu")
    with open(out / "summary.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"{report['cells_before']} -> {report['cells_after']} cells "
        f"({100 * report['reduction']:.1f}% reduction); artifacts in {out}"
    )
    return 0


def _cmd_study(args) -> int:
    from mdfrac import pipeline, study
    from mdfrac.config import load_config
    from mdfrac.meshio import write_csv
    from mdfrac.vem_darcy import solve_darcy

    cfg = load_config(args.config)
    out = Path(args.out) if args.out else cfg.base_dir / cfg.output.directory
    out.mkdir(parents=True, exist_ok=True)

    if args.mode == "space":
        result = study.spatial_study(
            levels=args.levels,
            base_n=max(cfg.mesh.n, 4),
            permeability=(
                cfg.darcy.matrix_permeability
                if not isinstance(cfg.darcy.matrix_permeability, list)
                else 1.0
            ),
        )
    else:
        md = pipeline.build_grid(cfg)
        if cfg.coarsen.enabled:
            md, _ = pipeline.coarsen_top_grid(
                md, cfg.coarsen.threshold, cfg.coarsen.mode
            )
        dparams = pipeline.darcy_params_from_config(cfg, md)
        field = solve_darcy(md, dparams, method=cfg.solver.method, tol=cfg.solver.tol)
        tparams = pipeline.transport_params_from_config(cfg, md)
        result = study.temporal_study(md, field, tparams, levels=args.levels)

    print(result.table())
    rows = {
        "level": [r.level for r in result.rows],
        "resolution": [r.resolution for r in result.rows],
    }
    for key in result.rows[0].errors:
        rows[key] = [r.errors[key] for r in result.rows]
    write_csv(out / f"study_{args.mode}.csv", {k: np.asarray(v) for k, v in rows.items()})
    return 0


def build_parser() -> argparse.ArgumentParser:
    # the global flags live in a parent parser with suppressed defaults so
    # they can be given before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--log-level",
        default=argparse.SUPPRESS,
        choices=("debug", "info", "warning", "error"),
        help="verbosity of diagnostic logging",
    )
    common.add_argument(
        "--threads",
        type=int,
        default=argparse.SUPPRESS,
        help="cap solver thread pools",
    )

    parser = argparse.ArgumentParser(
        prog="mdfrac",
        description=(
            "Mixed-dimensional Darcy flow and passive transport on "
            "fractured porous media"
        ),
        parents=[common],
    )
    parser.set_defaults(log_level="warning", threads=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser(
        "run", help="run a full simulation from a TOML config", parents=[common]
    )
    p_run.add_argument("config", help="path to the TOML configuration")
    p_run.add_argument("--out", default=None, help="override the output directory")
    p_run.set_defaults(func=_cmd_run)

    p_co = sub.add_parser(
        "coarsen", help="agglomerate a Gmsh mesh into polytopes", parents=[common]
    )
    p_co.add_argument("mesh", help="Gmsh MSH 2.2 file")
    p_co.add_argument(
        "--threshold",
        type=float,
        required=True,
        help="measure threshold (0 = identity partition)",
    )
    p_co.add_argument(
        "--mode",
        choices=("absolute", "mean_fraction"),
        default="mean_fraction",
        help="threshold interpretation",
    )
    p_co.add_argument("--out", required=True, help="output directory")
    p_co.set_defaults(func=_cmd_coarsen)

    p_st = sub.add_parser("study", help="convergence study", parents=[common])
    p_st.add_argument("config", help="path to the TOML configuration")
    p_st.add_argument("--mode", choices=("space", "time"), required=True)
    p_st.add_argument("--levels", type=int, default=4)
    p_st.add_argument("--out", default=None, help="override the output directory")
    p_st.set_defaults(func=_cmd_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads is not None:
        _set_threads(args.threads)
    try:
        return args.func(args)
    except MdfracError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
