import numpy as np
import pytest
from conftest import left_right_bc, line_grid, random_flow_instance

from mdfrac.errors import SolverError
from mdfrac.fv_transport import (
    TransportParams,
    assemble_transport,
    run_transport,
    upwind_delta,
)
from mdfrac.structured import fractured_square_grid
from mdfrac.vem_darcy import DarcyField, DarcyParams, solve_darcy


def chain_field():
    """Unit flux through a 3-cell chain of unit segments."""
    md = line_grid([0.0, 1.0, 2.0, 3.0])

    def bc(d, x):
        if abs(x[0]) < 1e-9:
            return ("flux", -1.0)  # unit inflow
        return ("dirichlet", 0.0)

    params = DarcyParams(permeability={1: 1.0}, bc=bc)
    return md, solve_darcy(md, params)


def unit_params(**overrides):
    kw = dict(porosity={1: 1.0}, aperture={}, dt=1.0, t_end=1.0, inflow_conc=1.0)
    kw.update(overrides)
    return TransportParams(**kw)


def test_upwind_delta():
    assert upwind_delta(1.0) == 1.0
    assert upwind_delta(0.0) == 1.0
    assert upwind_delta(-2.5) == 0.0


def test_chain_operator_hand_assembly():
    md, field = chain_field()
    op = assemble_transport(md, field, unit_params())

    assert np.allclose(op.mass, 1.0, atol=1e-12)
    U = np.array([[1.0, 0.0, 0.0], [-1.0, 1.0, 0.0], [0.0, -1.0, 1.0]])
    assert np.allclose(op.upwind.toarray(), U, atol=1e-12)
    assert np.allclose(op.rhs_inflow, [1.0, 0.0, 0.0], atol=1e-12)
    assert op.outflow_index.tolist() == [2]
    assert np.allclose(op.outflow_flux, [1.0], atol=1e-12)
    assert op.courant == pytest.approx(1.0, abs=1e-12)


def test_chain_single_step():
    # One implicit step of the unit chain: each cell takes half of its
    # upstream neighbour, giving the geometric sequence 1/2, 1/4, 1/8.
    md, field = chain_field()
    res = run_transport(md, field, unit_params())
    assert np.allclose(res.final.conc[1], [0.5, 0.25, 0.125], atol=1e-12)
    assert res.mass_error < 1e-12


def test_chain_reaches_constant_steady_state():
    md, field = chain_field()
    res = run_transport(md, field, unit_params(t_end=60.0), store_every=60)
    assert np.allclose(res.final.conc[1], 1.0, atol=1e-12)
    # at steady state the production rate equals the unit inflow rate
    assert res.curve.rate[-1] == pytest.approx(1.0, abs=1e-12)
    assert res.curve.cumulative[-1] - res.curve.cumulative[-2] == pytest.approx(
        1.0, abs=1e-12
    )


def test_zero_velocity_keeps_state():
    md = line_grid([0.0, 1.0, 2.0, 3.0])
    params = DarcyParams(permeability={1: 1.0})  # p == 0 everywhere, u == 0
    field = solve_darcy(md, params)
    c0 = np.array([0.3, 0.9, 0.1])
    res = run_transport(
        md, field, unit_params(t_end=3.0, initial_conc={1: c0}, inflow_conc=0.0)
    )
    assert np.allclose(res.final.conc[1], c0, atol=1e-14)
    assert np.allclose(res.operator.upwind.toarray(), 0.0, atol=1e-13)


def test_source_term_fills_cells():
    md = line_grid([0.0, 1.0, 2.0, 3.0])
    field = solve_darcy(md, DarcyParams(permeability={1: 1.0}))
    params = unit_params(dt=0.5, t_end=0.5, inflow_conc=0.0, source=lambda d, x: 1.0)
    res = run_transport(md, field, params)
    assert np.allclose(res.final.conc[1], 0.5, atol=1e-12)
    assert res.mass_error < 1e-12


def test_dt_stability_over_six_orders():
    md, field = chain_field()
    for dt in [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]:
        res = run_transport(md, field, unit_params(dt=dt, t_end=5 * dt))
        c = res.final.conc[1]
        assert np.all(np.isfinite(c))
        assert np.all(c >= -1e-12) and np.all(c <= 1 + 1e-12)


def test_fracture_coupling_signs():
    # Vertical flow across a horizontal fracture: every coupled face moves
    # mass out of its upstream cell (+q on the diagonal) and injects it into
    # the downstream row with weight -q, also across the dimensional gap.
    segs = [((0.0, 0.5), (1.0, 0.5))]
    md = fractured_square_grid(2, segs)

    def bc(d, x):
        if abs(x[1]) < 1e-9:
            return ("dirichlet", 1.0)
        if abs(x[1] - 1.0) < 1e-9:
            return ("dirichlet", 0.0)
        return ("flux", 0.0)

    dparams = DarcyParams(permeability={2: 1.0, 1: 1.0}, normal_coupling={1: 1e4}, bc=bc)
    field = solve_darcy(md, dparams)
    tparams = TransportParams(
        porosity={2: 1.0, 1: 1.0}, aperture={1: 1e-2}, dt=0.1, t_end=0.1
    )
    op = assemble_transport(md, field, tparams)

    A = op.upwind.tocsr()
    cmap = md.couplings[2]
    high = md.grids[2]
    seen_in = seen_out = 0
    for e, low in zip(cmap.high_face, cmap.low_cell):
        q = field.flux[2][e]
        P = high.face_cells[e][0]
        gP, gl = op.index(2, P), op.index(1, low)
        if q > 1e-12:  # matrix cell feeds the fracture
            assert A[gl, gP] == pytest.approx(-q, rel=1e-12)
            seen_in += 1
        elif q < -1e-12:  # fracture feeds the matrix cell
            assert A[gP, gl] == pytest.approx(q, rel=1e-12)
            seen_out += 1
    assert seen_in > 0 and seen_out > 0
    # pairwise conservation: every column of the advection matrix sums to
    # the boundary outflow it carries, so interior columns sum to zero
    colsum = np.asarray(A.sum(axis=0)).ravel()
    out = np.zeros(op.size)
    np.add.at(out, op.outflow_index, op.outflow_flux)
    assert np.allclose(colsum, out, atol=1e-12)


def test_network_mass_audit_and_bounds():
    segs = [((0.25, 0.5), (1.0, 0.5)), ((0.5, 0.0), (0.5, 1.0))]
    md = fractured_square_grid(4, segs)
    dparams = DarcyParams(
        permeability={2: 1.0, 1: 1e2, 0: 1.0},
        normal_coupling={1: 1e2, 0: 1e2},
        bc=left_right_bc,
    )
    field = solve_darcy(md, dparams)
    tparams = TransportParams(
        porosity={2: 1.0, 1: 1.0, 0: 1.0},
        aperture={1: 1e-2, 0: 1e-4},
        dt=0.05,
        t_end=0.5,
        inflow_conc=1.0,
    )
    res = run_transport(md, field, tparams, darcy_params=dparams)
    assert res.mass_error < 1e-12
    for state in res.states:
        for d, c in state.conc.items():
            assert np.all(c >= -1e-10) and np.all(c <= 1 + 1e-10)
    assert np.all(res.curve.rate >= -1e-12)
    assert np.allclose(
        res.curve.cumulative, np.cumsum(res.curve.rate) * tparams.dt, atol=1e-14
    )


def test_zero_point_volume_is_algebraic():
    # aperture[0] = 0 removes the 0d mass term; the intersection then takes
    # the flux-weighted upstream average and the run stays well-posed
    segs = [((0.0, 0.5), (1.0, 0.5)), ((0.5, 0.0), (0.5, 1.0))]
    md = fractured_square_grid(4, segs)
    dparams = DarcyParams(
        permeability={2: 1.0, 1: 1e2, 0: 1.0},
        normal_coupling={1: 1e2, 0: 1e2},
        bc=left_right_bc,
    )
    field = solve_darcy(md, dparams)
    tparams = TransportParams(
        porosity={2: 1.0, 1: 1.0, 0: 1.0},
        aperture={1: 1e-2, 0: 0.0},
        dt=0.1,
        t_end=0.3,
    )
    res = run_transport(md, field, tparams)
    assert res.mass_error < 1e-12
    c0 = res.final.conc[0]
    assert np.all(c0 >= -1e-10) and np.all(c0 <= 1 + 1e-10)


def test_random_instances_maximum_principle():
    rng = np.random.default_rng(20260823)
    for _ in range(8):
        md, dparams, field = random_flow_instance(rng)
        eps = 10.0 ** rng.uniform(-3, 0)
        dt = 10.0 ** rng.uniform(-2, 1)
        tparams = TransportParams(
            porosity={d: rng.uniform(0.2, 1.0) for d in md.dims},
            aperture={d: eps ** (md.top_dim - d) for d in md.dims},
            dt=dt,
            t_end=5 * dt,
            inflow_conc=rng.uniform(0.0, 1.0),
            initial_conc=rng.uniform(0.0, 1.0),
        )
        res = run_transport(md, field, tparams, darcy_params=dparams)
        assert res.mass_error < 1e-12
        for state in res.states:
            for c in state.conc.values():
                assert np.all(c >= -1e-10) and np.all(c <= 1 + 1e-10)


def test_zero_inflow_concentration_produces_nothing():
    md, field = chain_field()
    res = run_transport(md, field, unit_params(t_end=10.0, inflow_conc=0.0))
    assert np.allclose(res.curve.rate, 0.0, atol=1e-14)
    assert np.allclose(res.final.conc[1], 0.0, atol=1e-14)


def test_store_every_and_observers():
    md, field = chain_field()
    seen = []
    res = run_transport(
        md,
        field,
        unit_params(t_end=10.0),
        observers=[lambda s: seen.append(s.step)],
        store_every=5,
    )
    assert seen == list(range(11))
    assert [s.step for s in res.states] == [0, 5, 10]
    assert res.states[-1].time == pytest.approx(10.0)


def test_first_order_in_time():
    # fixed grid, shrinking dt: the L2 error against a tight-dt reference
    # should drop by about half per halving
    md = line_grid(np.linspace(0.0, 1.0, 9))

    def bc(d, x):
        if abs(x[0]) < 1e-9:
            return ("flux", -1.0)
        return ("dirichlet", 0.0)

    field = solve_darcy(md, DarcyParams(permeability={1: 1.0}, bc=bc))
    T = 0.5

    def final_conc(n_steps):
        p = unit_params(dt=T / n_steps, t_end=T)
        return run_transport(md, field, p).final.conc[1]

    ref = final_conc(2560)
    w = md.grids[1].cell_measure
    errs = [np.sqrt(w @ (final_conc(n) - ref) ** 2) for n in (10, 20, 40)]
    slope = np.polyfit(np.log([10, 20, 40]), np.log(errs), 1)[0]
    assert -slope == pytest.approx(1.0, abs=0.3)


def test_missing_parameters_raise():
    md, field = chain_field()
    with pytest.raises(SolverError, match="porosity"):
        assemble_transport(
            md, field, TransportParams(porosity={}, aperture={}, dt=1.0, t_end=1.0)
        )
    segs = [((0.0, 0.5), (1.0, 0.5))]
    md2 = fractured_square_grid(2, segs)
    f2 = solve_darcy(
        md2, DarcyParams(permeability={2: 1.0, 1: 1.0}, normal_coupling={1: 1.0})
    )
    with pytest.raises(SolverError, match="aperture"):
        assemble_transport(
            md2,
            f2,
            TransportParams(porosity={2: 1.0, 1: 1.0}, aperture={}, dt=1.0, t_end=1.0),
        )
    with pytest.raises(SolverError, match="dt"):
        TransportParams(porosity={}, aperture={}, dt=0.0, t_end=1.0)
    with pytest.raises(SolverError, match="multiple"):
        TransportParams(porosity={1: 1.0}, aperture={}, dt=0.3, t_end=1.0).num_steps


def test_nonconservative_field_warns():
    md, field = chain_field()
    bad = DarcyField(
        md=md,
        pressure=field.pressure,
        flux={1: field.flux[1] + np.array([0.0, 0.5, 0.0, 0.0])},
        report=field.report,
    )
    with pytest.warns(UserWarning, match="conservative"):
        assemble_transport(
            md, bad, unit_params(), darcy_params=DarcyParams(permeability={1: 1.0})
        )


def test_wrong_grid_rejected():
    md, field = chain_field()
    other = line_grid([0.0, 1.0, 2.0, 3.0])
    with pytest.raises(SolverError, match="grid"):
        assemble_transport(other, field, unit_params())
