"""Exactness of the mixed scheme for linear pressure fields.

The lowest-order method reproduces any cellwise-linear pressure and its
constant Darcy velocity exactly, on simplices and on agglomerated
polytopal cells alike.  This script solves p = 1 + 2x - 3y on a
triangulated unit square and on a coarsened version of the same mesh
(which contains non-convex cells), and prints the worst errors.
"""

import numpy as np

from mdfrac.coarsen import coarsen_grid
from mdfrac.mdgrid import MixedDimGrid, build_dim_grid
from mdfrac.structured import unit_square_triangulation
from mdfrac.vem_darcy import DarcyParams, project_velocity, solve_darcy

GRAD = np.array([2.0, -3.0])


def exact_pressure(x):
    return 1.0 + x[:2] @ GRAD if x.ndim == 1 else 1.0 + x[:, :2] @ GRAD


def bc(d, x):
    return ("dirichlet", float(exact_pressure(x)))


def solve_and_report(label, grid):
    md = MixedDimGrid({2: grid})
    params = DarcyParams(permeability={2: 1.0}, bc=bc)
    field = solve_darcy(md, params)

    p_err = np.abs(field.pressure[2] - exact_pressure(grid.cell_centroid)).max()
    q_exact = (grid.face_normal @ -GRAD) * grid.face_measure
    q_err = np.abs(field.flux[2] - q_exact).max()
    v_err = np.abs(project_velocity(field, params)[2] - -GRAD).max()
    print(f"{label:32s} cells {grid.num_cells:4d}   "
          f"|p - p_h| {p_err:.2e}   |q - q_h| {q_err:.2e}   |u - u_h| {v_err:.2e}")


def main():
    print(__doc__)
    nodes, tris = unit_square_triangulation(8)
    tri = build_dim_grid(nodes, tris, dim=2)
    solve_and_report("triangular 8x8", tri)

    coarse, report = coarsen_grid(tri, 2.5, mode="mean_fraction")
    solve_and_report(f"coarsened ({report.reduction:.0%} fewer cells)", coarse)

    print("\nBoth meshes reproduce the linear field to round-off: the "
          "consistency part of the local\nbilinear forms is exact on "
          "K-gradients of linear polynomials, whatever the cell shape.")


if __name__ == "__main__":
    main()
