"""Shared helpers for the test suite."""

import numpy as np

from mdfrac.mdgrid import MixedDimGrid, build_dim_grid
from mdfrac.structured import fractured_square_grid
from mdfrac.vem_darcy import DarcyParams, solve_darcy


def line_grid(nodes):
    """A 1d mixed-dimensional grid from sorted node coordinates."""
    coords = np.asarray(nodes, dtype=float).reshape(-1, 1)
    cells = np.column_stack([np.arange(len(coords) - 1), np.arange(1, len(coords))])
    return MixedDimGrid({1: build_dim_grid(coords, cells, dim=1)}, {})


def left_right_bc(d, x, p_in=1.0, p_out=0.0):
    """Dirichlet inlet/outlet on x=0 / x=1, no-flow everywhere else."""
    if abs(x[0]) < 1e-9:
        return ("dirichlet", p_in)
    if abs(x[0] - 1.0) < 1e-9:
        return ("dirichlet", p_out)
    return ("flux", 0.0)


# Segments whose endpoints sit on any n-multiple-of-4 lattice; diagonals run
# along the SW-NE triangulation edges.
SEGMENT_POOL = [
    ((0.25, 0.5), (1.0, 0.5)),
    ((0.0, 0.25), (0.75, 0.25)),
    ((0.5, 0.0), (0.5, 1.0)),
    ((0.75, 0.25), (0.75, 0.75)),
    ((0.0, 0.0), (1.0, 1.0)),
    ((0.0, 0.75), (1.0, 0.75)),
    ((0.25, 0.0), (0.25, 0.75)),
]


def random_flow_instance(rng):
    """A small random fractured-square Darcy solve for property tests.

    Returns ``(md, params, field)`` with at most a few hundred cells. The
    permeabilities, coupling coefficients and boundary pressures are drawn
    over several orders of magnitude so the resulting flux fields exercise
    both conductive and blocking regimes.
    """
    n = int(rng.choice([4, 8]))
    k = int(rng.integers(1, 4))
    picks = rng.choice(len(SEGMENT_POOL), size=k, replace=False)
    segments = [SEGMENT_POOL[int(i)] for i in picks]
    md = fractured_square_grid(n, segments)

    k_frac = 10.0 ** rng.uniform(-3, 3)
    k_star = 10.0 ** rng.uniform(-3, 3)
    p_in = rng.uniform(0.5, 2.0)
    perm = {2: 1.0, 1: k_frac}
    coupling = {1: k_star}
    if 0 in md.grids:
        perm[0] = 1.0
        coupling[0] = k_star
    params = DarcyParams(
        permeability=perm,
        normal_coupling=coupling,
        bc=lambda d, x: left_right_bc(d, x, p_in=p_in),
    )
    field = solve_darcy(md, params)
    return md, params, field
