"""Mixed-dimensional Darcy flow with a first-order dual virtual element method.

Unknowns are face fluxes (the integral of the normal velocity over each
face) and cell pressures, on every grid of the hierarchy; point cells carry
only a pressure. Fractures exchange mass with their surroundings through
Robin-type coupling conditions, one per (face, lower-cell) pair, with
resistance ``1/k``.

The local velocity space of a cell contains the constant vector fields
``K grad(q)``, ``q`` linear, which is enough for exactness on cellwise
linear pressures (the patch test) on arbitrary polytopes; the remainder of
the space is controlled by a scaled algebraic stabilization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps

from mdfrac.errors import GridTopologyError, SolverError
from mdfrac.linalg import SolveReport, TripletBuilder, solve_sparse
from mdfrac.mdgrid import CellGeometry, CouplingMap, DimGrid, MixedDimGrid

__all__ = [
    "DarcyParams",
    "LocalVemKernel",
    "DarcyField",
    "tangential_tensor",
    "local_projection",
    "local_stabilization",
    "local_darcy_matrix",
    "assemble_saddle_point",
    "solve_darcy",
    "project_velocity",
    "check_conservation",
]

BcValue = tuple[str, float]


@dataclass
class DarcyParams:
    """Coefficients and boundary data of a mixed-dimensional Darcy problem.

    Attributes:
        permeability: effective tangential permeability per dimension —
            scalar, or a full ambient-space tensor that is projected onto
            each cell's tangent plane. For fracture dimensions this is the
            aperture-scaled value (physical permeability times aperture per
            reduced dimension).
        normal_coupling: Robin coefficient ``k`` of the interface law
            ``u.n = k (p_high - p_low)``, keyed by the lower dimension of
            the coupling. For a fracture of physical normal permeability
            ``k_n`` and aperture ``eps`` this is ``2 k_n / eps``.
        source: scalar source density per dimension, as a callable of the
            cell centroid (or a constant).
        bc: ``bc(dim, x) -> ("dirichlet", pbar) | ("flux", g)`` evaluated at
            outer boundary face centroids; ``g`` is the outward normal
            velocity. Defaults to homogeneous Dirichlet. Immersed tips
            always get zero flux, regardless of ``bc``.
    """

    permeability: dict[int, object]
    normal_coupling: dict[int, float] = field(default_factory=dict)
    source: dict[int, object] = field(default_factory=dict)
    bc: Optional[Callable[[int, np.ndarray], BcValue]] = None

    def source_density(self, d: int, x: np.ndarray) -> float:
        f = self.source.get(d, 0.0)
        return float(f(x)) if callable(f) else float(f)

    def boundary_value(self, d: int, x: np.ndarray) -> BcValue:
        if self.bc is None:
            return ("dirichlet", 0.0)
        kind, value = self.bc(d, x)
        if kind not in ("dirichlet", "flux"):
            raise SolverError(f"unknown boundary condition kind {kind!r}")
        return kind, float(value)


def tangential_tensor(K, geom: CellGeometry) -> np.ndarray:
    """Permeability of a cell in its tangent frame, as a (d, d) SPD matrix."""
    d = geom.dim
    if np.isscalar(K):
        if K <= 0:
            raise SolverError(f"permeability must be positive, got {K}")
        return float(K) * np.eye(d)
    K = np.asarray(K, dtype=float)
    if K.shape == (d, d):
        Kt = K
    else:
        amb = geom.frame.shape[1]
        if K.shape != (amb, amb):
            raise SolverError(
                f"permeability tensor has shape {K.shape}, expected "
                f"({d},{d}) or ({amb},{amb})"
            )
        Kt = geom.frame @ K @ geom.frame.T
    if not np.allclose(Kt, Kt.T):
        raise SolverError("permeability tensor must be symmetric")
    if np.any(np.linalg.eigvalsh(Kt) <= 0):
        raise SolverError("permeability tensor must be positive definite")
    return Kt


@dataclass
class LocalVemKernel:
    """Local flux-space matrices of one cell.

    ``matrix = consistency + scaling * stability`` acts on the cell's face
    fluxes ordered like ``geom.face_ids`` and oriented outward.
    """

    geom: CellGeometry
    consistency: np.ndarray
    stability: np.ndarray
    scaling: float
    projector: np.ndarray  # dof-space projector onto the constant fields
    gram: np.ndarray
    moments: np.ndarray  # Z: rows are scaled-monomial moments of the dofs

    @property
    def matrix(self) -> np.ndarray:
        return self.consistency + self.scaling * self.stability


def local_projection(
    geom: CellGeometry, Kt: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Moment matrix Z, Gram matrix G and dof matrix D of one cell.

    With monomials ``m_i = xi_i / h`` in the centered tangent frame and
    outward-flux dofs:

    - ``Z[i, e] = m_i`` at the face centroid (the energy pairing of a dof
      vector against the basis field ``K grad m_i``),
    - ``G = |E| K / h^2`` (the energy Gram of those basis fields),
    - ``D[e, i] = |e| (K n_e)_i / h`` (the dofs of the basis fields),

    and ``Z D = G`` holds exactly by the divergence theorem.
    """
    h = geom.diameter
    Z = geom.face_centroids_local.T / h
    G = geom.measure * Kt / h**2
    D = geom.face_measures[:, None] * (geom.face_normals_local @ Kt) / h
    return Z, G, D


def local_stabilization(Z: np.ndarray, G: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Stabilization ``(I - P)^T (I - P)`` with ``P = D G^{-1} Z``."""
    n = Z.shape[1]
    P = D @ np.linalg.solve(G, Z)
    T = np.eye(n) - P
    return T.T @ T


def local_darcy_matrix(geom: CellGeometry, K) -> LocalVemKernel:
    """Consistency-plus-stabilization flux matrix of one cell.

    The stabilization is scaled by ``h^(2-d)``, the natural magnitude of
    the energy of a unit integrated flux.
    """
    Kt = tangential_tensor(K, geom)
    Z, G, D = local_projection(geom, Kt)
    consistency = Z.T @ np.linalg.solve(G, Z)
    stability = local_stabilization(Z, G, D)
    scaling = geom.diameter ** (2 - geom.dim)
    P = D @ np.linalg.solve(G, Z)
    return LocalVemKernel(
        geom=geom,
        consistency=consistency,
        stability=stability,
        scaling=scaling,
        projector=P,
        gram=G,
        moments=Z,
    )


# ---------------------------------------------------------------------------
# global assembly
# ---------------------------------------------------------------------------


@dataclass
class SaddlePointSystem:
    """Assembled symmetric block system and everything needed to solve it."""

    matrix: sps.csr_matrix
    rhs: np.ndarray
    md: MixedDimGrid
    prescribed: np.ndarray  # dof indices with known values (tips, flux bc)
    prescribed_values: np.ndarray


def _coupling_coefficient(params: DarcyParams, low_dim: int) -> float:
    try:
        k = float(params.normal_coupling[low_dim])
    except KeyError:
        raise SolverError(
            f"normal_coupling[{low_dim}] is required to couple dimensions "
            f"{low_dim + 1} and {low_dim}"
        ) from None
    if k <= 0:
        raise SolverError(f"normal_coupling[{low_dim}] must be positive, got {k}")
    return k


def assemble_saddle_point(
    md: MixedDimGrid, params: DarcyParams
) -> SaddlePointSystem:
    """Assemble the symmetric mixed-dimensional Darcy system.

    Block structure per dimension ``d`` (descending):

    - momentum rows (one per face): ``A u - B p_d + C p_{d-1} = G``
    - negated mass rows (one per cell): ``-B^T u + C'^T u_{d+1} = -F``

    where ``A`` is the VEM flux matrix plus the Robin diagonal
    ``1/(k |e|)`` on coupled faces, ``B[e, P]`` is the orientation sign of
    face ``e`` in cell ``P``, and ``C[e, l] = 1`` for each coupling pair
    (coupled faces are oriented towards the lower cell, so a positive flux
    dof is flow into it).
    """
    lay = md.dof_layout
    tb = TripletBuilder((lay.total, lay.total))
    rhs = np.zeros(lay.total)
    pres_idx: list[int] = []
    pres_val: list[float] = []

    for d in md.dims:
        g = md.grids[d]
        if d >= 1:
            try:
                K = params.permeability[d]
            except KeyError:
                raise SolverError(f"permeability[{d}] is missing") from None
            _assemble_dim(tb, rhs, md, d, g, K, params)
            _collect_prescribed(md, d, g, params, pres_idx, pres_val)
        # negated mass rows: source contribution
        pidx = lay.pressure_index(d, np.arange(g.num_cells))
        for P in range(g.num_cells):
            fP = params.source_density(d, g.cell_centroid[P])
            if fP != 0.0:
                rhs[pidx[P]] -= fP * g.cell_measure[P]

        cmap = md.coupling_above(d)
        if cmap is not None:
            _assemble_coupling(tb, md, d, cmap, params)

    A = tb.tocsr()
    return SaddlePointSystem(
        matrix=A,
        rhs=rhs,
        md=md,
        prescribed=np.asarray(pres_idx, dtype=int),
        prescribed_values=np.asarray(pres_val),
    )


def _assemble_dim(tb, rhs, md, d, g: DimGrid, K, params: DarcyParams) -> None:
    lay = md.dof_layout
    for c in range(g.num_cells):
        geom = g.local_geometry(c)
        kern = local_darcy_matrix(geom, K)
        signs = geom.face_signs.astype(float)
        loc = signs[:, None] * kern.matrix * signs[None, :]
        gidx = lay.flux_index(d, geom.face_ids)
        tb.add_block(gidx, gidx, loc)
        # divergence coupling to the cell pressure (symmetric pair)
        pidx = int(lay.pressure_index(d, c))
        tb.add(gidx, pidx, -signs)
        tb.add(pidx, gidx, -signs)

    # outer Dirichlet data enters the momentum rows
    out = np.nonzero(md.boundary_out[d])[0]
    for e in out:
        kind, value = params.boundary_value(d, g.face_centroid[e])
        if kind == "dirichlet" and value != 0.0:
            rhs[lay.flux_index(d, e)] -= value


def _collect_prescribed(md, d, g, params, pres_idx, pres_val) -> None:
    lay = md.dof_layout
    for e in md.tip_faces(d):
        pres_idx.append(int(lay.flux_index(d, e)))
        pres_val.append(0.0)
    for e in np.nonzero(md.boundary_out[d])[0]:
        kind, value = params.boundary_value(d, g.face_centroid[e])
        if kind == "flux":
            pres_idx.append(int(lay.flux_index(d, e)))
            pres_val.append(value * float(g.face_measure[e]))


def _assemble_coupling(tb, md, low_dim, cmap: CouplingMap, params) -> None:
    lay = md.dof_layout
    k = _coupling_coefficient(params, low_dim)
    d = cmap.high_dim
    fidx = lay.flux_index(d, cmap.high_face)
    lidx = lay.pressure_index(low_dim, cmap.low_cell)
    # Robin resistance on the coupled faces
    tb.add(fidx, fidx, 1.0 / (k * cmap.mortar_area))
    # pressure of the lower cell enters the momentum rows (and transposed)
    tb.add(fidx, lidx, np.ones(cmap.num_pairs))
    tb.add(lidx, fidx, np.ones(cmap.num_pairs))


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------


@dataclass
class DarcyField:
    """Pressure and flux solution on a mixed-dimensional grid."""

    md: MixedDimGrid
    pressure: dict[int, np.ndarray]
    flux: dict[int, np.ndarray]
    report: SolveReport

    def raw_vector(self) -> np.ndarray:
        lay = self.md.dof_layout
        x = np.zeros(lay.total)
        for d in self.md.dims:
            if d >= 1:
                x[lay.flux_index(d, np.arange(self.md.grids[d].num_faces))] = (
                    self.flux[d]
                )
            x[lay.pressure_index(d, np.arange(self.md.grids[d].num_cells))] = (
                self.pressure[d]
            )
        return x


def solve_darcy(
    md: MixedDimGrid,
    params: DarcyParams,
    method: str = "direct",
    tol: float = 1e-10,
) -> DarcyField:
    """Assemble and solve; returns per-dimension pressures and face fluxes."""
    sysm = assemble_saddle_point(md, params)
    n = sysm.matrix.shape[0]
    known = sysm.prescribed
    if known.size:
        free = np.setdiff1d(np.arange(n), known)
        xk = sysm.prescribed_values
        A = sysm.matrix
        b_free = sysm.rhs[free] - A[free][:, known] @ xk
        x_free, report = solve_sparse(A[free][:, free], b_free, method=method, tol=tol)
        x = np.zeros(n)
        x[known] = xk
        x[free] = x_free
    else:
        x, report = solve_sparse(sysm.matrix, sysm.rhs, method=method, tol=tol)

    lay = md.dof_layout
    pressure = {}
    flux = {}
    for d in md.dims:
        g = md.grids[d]
        pressure[d] = x[lay.pressure_index(d, np.arange(g.num_cells))].copy()
        if d >= 1:
            flux[d] = x[lay.flux_index(d, np.arange(g.num_faces))].copy()
        else:
            flux[d] = np.zeros(0)
    return DarcyField(md=md, pressure=pressure, flux=flux, report=report)


def project_velocity(field: DarcyField, params: DarcyParams) -> dict[int, np.ndarray]:
    """Cellwise constant velocity (ambient coordinates) from the fluxes.

    Projects each cell's flux dofs onto its constant-field space; exact
    whenever the discrete velocity is cellwise constant.
    """
    out = {}
    md = field.md
    for d in md.dims:
        g = md.grids[d]
        vel = np.zeros((g.num_cells, g.ambient_dim))
        if d >= 1:
            K = params.permeability[d]
            for c in range(g.num_cells):
                geom = g.local_geometry(c)
                Kt = tangential_tensor(K, geom)
                Z, G, _ = local_projection(geom, Kt)
                u_loc = geom.face_signs * field.flux[d][geom.face_ids]
                coeff = np.linalg.solve(G, Z @ u_loc)
                # velocity = sum_i coeff_i K grad m_i in the frame
                vel[c] = geom.frame.T @ (Kt @ coeff / geom.diameter)
        out[d] = vel
    return out


@dataclass
class ConservationReport:
    max_residual: float
    per_dim: dict[int, float]

    def ok(self, tol: float) -> bool:
        return self.max_residual <= tol


def check_conservation(field: DarcyField, params: DarcyParams) -> ConservationReport:
    """Cellwise mass balance: outflow minus coupled inflow minus source.

    The discrete mass equations are enforced exactly up to solver
    precision, for every cell of every dimension including agglomerated
    polytopes.
    """
    md = field.md
    per_dim = {}
    worst = 0.0
    for d in md.dims:
        g = md.grids[d]
        resid = np.zeros(g.num_cells)
        for c in range(g.num_cells):
            out = 0.0
            for e, s in zip(g.cell_faces[c], g.cell_face_signs[c]):
                out += s * field.flux[d][e]
            resid[c] = out - params.source_density(
                d, g.cell_centroid[c]
            ) * g.cell_measure[c]
        cmap = md.coupling_above(d)
        if cmap is not None:
            up = cmap.high_dim
            for k in range(cmap.num_pairs):
                resid[cmap.low_cell[k]] -= field.flux[up][cmap.high_face[k]]
        per_dim[d] = float(np.abs(resid).max()) if resid.size else 0.0
        worst = max(worst, per_dim[d])
    return ConservationReport(max_residual=worst, per_dim=per_dim)
