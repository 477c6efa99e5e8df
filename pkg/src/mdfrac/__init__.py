"""Mixed-dimensional Darcy flow and passive transport in fractured media.

The package discretizes flow in a porous matrix crossed by fractures and
fracture intersections, each represented by its own lower-dimensional grid.
Darcy flow is solved with a first-order dual virtual element method that is
native to polytopal cells, so grids can be agglomerated (coarsened) without
losing the discrete structure; transport of a passive scalar rides on the
resulting fluxes with an upwind finite-volume scheme and implicit Euler
time stepping.

Typical entry points:

- :func:`mdfrac.meshio.build_mixed_grid` — Gmsh mesh to mixed-dimensional grid
- :func:`mdfrac.coarsen.coarsen_grid` — simplex-to-polytope agglomeration
- :func:`mdfrac.vem_darcy.solve_darcy` — pressure/flux solution
- :func:`mdfrac.fv_transport.run_transport` — scalar transport on the fluxes
- :func:`mdfrac.pipeline.run_simulation` — config-file driven pipeline
"""

__version__ = "0.1.0"

from mdfrac.errors import MdfracError

__all__ = ["MdfracError", "__version__"]
