"""A single fracture as a resistor: blocking and conductive regimes.

A vertical fracture cuts the unit square in half.  With unit pressure
drop and unit matrix permeability the through-flux has the closed form

    q = 1 / (1 + 2 / k*)

where k* is the normal coupling coefficient of the interface law
u.n = k*(p_matrix - p_fracture): each side of the fracture contributes a
resistance 1/k* in series with the two half-blocks.  Sweeping k* over
eight decades shows the two asymptotic regimes - a blocking fracture
shuts the flow off, a conductive one is hydraulically invisible.
"""

import numpy as np

from mdfrac.structured import fractured_square_grid
from mdfrac.vem_darcy import DarcyParams, solve_darcy


def bc(d, x):
    if abs(x[0]) < 1e-9:
        return ("dirichlet", 1.0)
    if abs(x[0] - 1.0) < 1e-9:
        return ("dirichlet", 0.0)
    return ("flux", 0.0)


def through_flux(field):
    md = field.md
    g = md.grids[2]
    out = np.nonzero(md.boundary_out[2])[0]
    return sum(field.flux[2][e] for e in out if abs(g.face_centroid[e][0] - 1.0) < 1e-12)


def main():
    print(__doc__)
    md = fractured_square_grid(8, [((0.5, 0.0), (0.5, 1.0))])
    print(f"{'k*':>10s} {'flux':>12s} {'closed form':>12s} {'rel err':>10s}")
    for exponent in range(-4, 5):
        k_star = 10.0 ** exponent
        params = DarcyParams(
            permeability={2: 1.0, 1: 1.0},
            normal_coupling={1: k_star},
            bc=bc,
        )
        field = solve_darcy(md, params)
        q = through_flux(field)
        exact = 1.0 / (1.0 + 2.0 / k_star)
        print(f"{k_star:10.0e} {q:12.6e} {exact:12.6e} {abs(q - exact) / exact:10.1e}")
    print("\nThe fracture pressure sits midway between the sides by symmetry, "
          "and the computed flux\nmatches the series-resistance formula to "
          "solver precision in every regime.")


if __name__ == "__main__":
    main()
