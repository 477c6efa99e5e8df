"""Mixed-dimensional grid data model and geometry engine.

A fractured domain is represented by one grid of cells per dimension
(``DimGrid``), from the ambient dimension ``N`` down to 0, together with
coupling maps (``CouplingMap``) that connect faces of the grid of dimension
``d`` to the cells of the grid of dimension ``d - 1`` wherever they coincide
geometrically. The bundle of grids, couplings, boundary classification and
degree-of-freedom layout is a ``MixedDimGrid``.

Cells may be simplices or polytopes. Every polytopal cell stores the fine
simplices it was generated from (by agglomeration or by construction); all
measures, centroids and quadratures are computed simplex-by-simplex and
summed, which stays exact for non-convex cells and for cells containing
slits.

Faces that coincide with a lower-dimensional cell are split so that each
side of the interface carries its own face entity (and hence its own flux
degree of freedom), with a side label ``+`` or ``-``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import factorial
from typing import Iterable, Optional

import numpy as np

from mdfrac.errors import (
    DegenerateCellError,
    GridTopologyError,
    NonConformingMeshError,
    PlanarityError,
)

__all__ = [
    "DimGrid",
    "CouplingMap",
    "MixedDimGrid",
    "CellGeometry",
    "build_dim_grid",
    "tangent_frame",
    "attach_coupling",
    "locate_points",
]


# ---------------------------------------------------------------------------
# simplex geometry helpers
# ---------------------------------------------------------------------------


def simplex_measures(coords: np.ndarray, simplices: np.ndarray, dim: int) -> np.ndarray:
    """Unsigned measures of ``dim``-simplices embedded in ``R^N``.

    Parameters:
        coords: ``(num_nodes, N)`` node coordinates.
        simplices: ``(num_simplices, dim + 1)`` node indices.
        dim: intrinsic dimension of the simplices (0 gives measure 1).

    Returns:
        ``(num_simplices,)`` array of lengths/areas/volumes.
    """
    simplices = np.atleast_2d(np.asarray(simplices, dtype=int))
    if dim == 0:
        return np.ones(simplices.shape[0])
    edges = coords[simplices[:, 1:]] - coords[simplices[:, :1]]  # (n, dim, N)
    gram = np.einsum("nik,njk->nij", edges, edges)
    det = np.linalg.det(gram)
    det = np.where(det < 0.0, 0.0, det)  # guard tiny negative round-off
    return np.sqrt(det) / factorial(dim)


def simplex_centroids(coords: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    simplices = np.atleast_2d(np.asarray(simplices, dtype=int))
    return coords[simplices].mean(axis=1)


def _facet_local_indices(dim: int) -> list[tuple[int, ...]]:
    """Vertex index tuples of the facets of a ``dim``-simplex."""
    return [c for c in itertools.combinations(range(dim + 1), dim)]


# ---------------------------------------------------------------------------
# grid entities
# ---------------------------------------------------------------------------


@dataclass
class CellGeometry:
    """Per-cell geometric data in the cell's tangent frame.

    Used by the local discretization kernels. ``frame`` has shape
    ``(dim, ambient_dim)``; local coordinates of an ambient point ``x`` are
    ``frame @ (x - centroid)``.
    """

    cell_id: int
    dim: int
    measure: float
    diameter: float
    centroid: np.ndarray  # ambient coordinates
    frame: np.ndarray  # (dim, ambient_dim), orthonormal rows
    face_ids: np.ndarray  # global face ids, one per local face
    face_signs: np.ndarray  # +1 if the stored face normal is outward
    face_measures: np.ndarray
    face_centroids_local: np.ndarray  # (n_faces, dim)
    face_normals_local: np.ndarray  # (n_faces, dim), unit, outward


class DimGrid:
    """Grid of fixed intrinsic dimension embedded in ``R^N``.

    Constructed through :func:`build_dim_grid`. All arrays are set by the
    constructor and must be treated as read-only afterwards; the only
    sanctioned mutation is the face splitting done by
    :func:`attach_coupling` while a :class:`MixedDimGrid` is assembled.

    Attributes:
        dim: intrinsic dimension of the cells.
        ambient_dim: dimension ``N`` of the embedding space.
        node_coords: ``(num_nodes, N)`` coordinates.
        face_nodes: node indices per face (list of arrays).
        face_measure, face_centroid: per-face measure and centroid.
        face_normal: ``(num_faces, N)`` unit normal. It is the outward
            normal of the incident cell with orientation sign ``+1``.
        face_cells: incident cell ids per face (1 or 2 entries after
            interface splitting).
        fracture_face: flags faces coinciding with a lower-dimensional
            cell; ``fracture_side`` carries the side label ``+1``/``-1``
            (0 when unset).
        cell_faces / cell_face_signs / cell_face_normals: per cell the
            face ids, orientation signs, and outward unit normals.
        cell_measure, cell_centroid, cell_diameter: cell geometry.
        cell_simplices: generating fine simplices per cell,
            ``(n_i, dim + 1)`` node indices.
    """

    def __init__(self, dim: int, ambient_dim: int, node_coords: np.ndarray):
        self.dim = dim
        self.ambient_dim = ambient_dim
        self.node_coords = np.asarray(node_coords, dtype=float).reshape(-1, ambient_dim)

        self.face_nodes: list[np.ndarray] = []
        self.face_measure = np.zeros(0)
        self.face_centroid = np.zeros((0, ambient_dim))
        self.face_normal = np.zeros((0, ambient_dim))
        self.face_cells: list[list[int]] = []
        self.fracture_face = np.zeros(0, dtype=bool)
        self.fracture_side = np.zeros(0, dtype=np.int8)

        self.cell_faces: list[np.ndarray] = []
        self.cell_face_signs: list[np.ndarray] = []
        self.cell_face_normals: list[np.ndarray] = []
        self.cell_measure = np.zeros(0)
        self.cell_centroid = np.zeros((0, ambient_dim))
        self.cell_diameter = np.zeros(0)
        self.cell_simplices: list[np.ndarray] = []

        self._frames: dict[int, np.ndarray] = {}
        self.planarity_tol = 1e-8

    # -- sizes ----------------------------------------------------------

    @property
    def num_cells(self) -> int:
        return len(self.cell_simplices)

    @property
    def num_faces(self) -> int:
        return len(self.face_nodes)

    @property
    def num_nodes(self) -> int:
        return self.node_coords.shape[0]

    # -- derived topology ----------------------------------------------

    def cell_nodes(self, cell: int) -> np.ndarray:
        """Unique node indices of a cell, ascending."""
        return np.unique(self.cell_simplices[cell])

    def boundary_faces(self) -> np.ndarray:
        """Faces with a single incident cell that are not interface faces."""
        ids = [
            f
            for f in range(self.num_faces)
            if len(self.face_cells[f]) == 1 and not self.fracture_face[f]
        ]
        return np.asarray(ids, dtype=int)

    def all_fine_simplices(self) -> tuple[np.ndarray, np.ndarray]:
        """All fine simplices stacked, with the owning cell of each row."""
        if self.num_cells == 0:
            return np.zeros((0, self.dim + 1), dtype=int), np.zeros(0, dtype=int)
        stacked = np.vstack(self.cell_simplices)
        owner = np.repeat(
            np.arange(self.num_cells),
            [s.shape[0] for s in self.cell_simplices],
        )
        return stacked, owner

    # -- frames and local geometry --------------------------------------

    def frame(self, cell: int) -> np.ndarray:
        """Orthonormal tangent frame of a cell, shape ``(dim, ambient_dim)``."""
        if cell not in self._frames:
            self._frames[cell] = tangent_frame(self, cell)
        return self._frames[cell]

    def local_geometry(self, cell: int) -> CellGeometry:
        """Assemble the tangent-frame geometry of one cell."""
        frame = self.frame(cell)
        fids = self.cell_faces[cell]
        centroid = self.cell_centroid[cell]
        fc = self.face_centroid[fids] - centroid
        normals = self.cell_face_normals[cell]
        loc_c = fc @ frame.T
        loc_n = normals @ frame.T
        # re-normalize after projection to absorb planarity round-off
        nrm = np.linalg.norm(loc_n, axis=1, keepdims=True)
        loc_n = loc_n / nrm
        return CellGeometry(
            cell_id=cell,
            dim=self.dim,
            measure=float(self.cell_measure[cell]),
            diameter=float(self.cell_diameter[cell]),
            centroid=centroid,
            frame=frame,
            face_ids=fids,
            face_signs=self.cell_face_signs[cell],
            face_measures=self.face_measure[fids],
            face_centroids_local=loc_c,
            face_normals_local=loc_n,
        )


@dataclass
class CouplingMap:
    """Face-to-cell pairing between grids of consecutive dimension.

    Each pair connects one face of the ``high`` grid (dimension ``d``) to
    one cell of the ``low`` grid (dimension ``d - 1``) that it coincides
    with. After :func:`attach_coupling` every paired face has exactly one
    incident cell and its stored normal points from that cell towards the
    low-dimensional cell, so the face's flux dof is positive for flow into
    the lower dimension.

    Attributes:
        high_dim: dimension ``d`` of the high grid.
        high_face: paired face ids in the high grid.
        low_cell: paired cell ids in the low grid.
        side: ``+1`` / ``-1`` side label per pair.
        mortar_area: measure of the geometric overlap per pair (the face
            measure; equals the low-cell measure for matching grids).
    """

    high_dim: int
    high_face: np.ndarray
    low_cell: np.ndarray
    side: np.ndarray
    mortar_area: np.ndarray

    @property
    def num_pairs(self) -> int:
        return len(self.high_face)

    def pairs_of_low_cell(self, low_cell: int) -> np.ndarray:
        return np.nonzero(self.low_cell == low_cell)[0]


# ---------------------------------------------------------------------------
# grid construction
# ---------------------------------------------------------------------------


def build_dim_grid(
    nodes: np.ndarray,
    cells,
    dim: int,
    ambient_dim: Optional[int] = None,
    strict_manifold: bool = True,
) -> DimGrid:
    """Build a :class:`DimGrid` from simplicial or polytopal connectivity.

    Parameters:
        nodes: ``(num_nodes, N)`` coordinates.
        cells: either an ``(num_cells, dim + 1)`` integer array (one simplex
            per cell) or a list of ``(n_i, dim + 1)`` arrays (one polytope
            per cell, given by its generating fine simplices).
        dim: intrinsic dimension of the cells.
        ambient_dim: embedding dimension, defaults to ``nodes.shape[1]``.
        strict_manifold: reject faces shared by more than two cells. Multi-
            cell faces are legal only at interfaces towards a lower
            dimension, which :func:`attach_coupling` resolves by splitting;
            the hierarchical builder therefore disables the strict check.

    Raises:
        DegenerateCellError: a cell has zero measure.
        GridTopologyError: non-manifold face while ``strict_manifold``.
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 2:
        raise GridTopologyError("node array must be two-dimensional")
    if ambient_dim is None:
        ambient_dim = nodes.shape[1]
    if not np.all(np.isfinite(nodes)):
        raise GridTopologyError("node coordinates must be finite")

    grid = DimGrid(dim, ambient_dim, nodes)

    if isinstance(cells, np.ndarray) and cells.ndim == 2:
        cell_list = [cells[i : i + 1] for i in range(cells.shape[0])]
    else:
        cell_list = [np.atleast_2d(np.asarray(c, dtype=int)) for c in cells]

    n_cells = len(cell_list)
    grid.cell_simplices = [np.asarray(c, dtype=int) for c in cell_list]
    grid.cell_measure = np.zeros(n_cells)
    grid.cell_centroid = np.zeros((n_cells, ambient_dim))
    grid.cell_diameter = np.zeros(n_cells)

    coords = grid.node_coords
    for cid, simps in enumerate(grid.cell_simplices):
        meas = simplex_measures(coords, simps, dim)
        if np.any(meas <= 0.0):
            raise DegenerateCellError(f"cell {cid} contains a zero-measure simplex")
        cents = simplex_centroids(coords, simps)
        total = meas.sum()
        grid.cell_measure[cid] = total
        grid.cell_centroid[cid] = (meas[:, None] * cents).sum(axis=0) / total
        pts = coords[np.unique(simps)]
        if dim == 0:
            grid.cell_diameter[cid] = 1.0
        else:
            diff = pts[:, None, :] - pts[None, :, :]
            grid.cell_diameter[cid] = np.sqrt((diff**2).sum(axis=2).max())

    if dim == 0:
        grid.cell_measure[:] = 1.0  # convention; physical volume enters via aperture
        grid.fracture_face = np.zeros(0, dtype=bool)
        grid.cell_faces = [np.zeros(0, dtype=int) for _ in range(n_cells)]
        grid.cell_face_signs = [np.zeros(0, dtype=int) for _ in range(n_cells)]
        grid.cell_face_normals = [np.zeros((0, ambient_dim)) for _ in range(n_cells)]
        return grid

    _build_faces(grid, strict_manifold)
    return grid


def _build_faces(grid: DimGrid, strict_manifold: bool) -> None:
    """Enumerate cell boundary facets, dedupe into faces, set geometry."""
    dim = grid.dim
    coords = grid.node_coords
    facet_idx = _facet_local_indices(dim)

    face_of_key: dict[tuple, int] = {}
    face_nodes: list[np.ndarray] = []
    face_cells: list[list[int]] = []
    cell_faces: list[list[int]] = []
    cell_signs: list[list[int]] = []
    cell_normals: list[list[np.ndarray]] = []
    face_normal: list[np.ndarray] = []

    for cid, simps in enumerate(grid.cell_simplices):
        # boundary facets of the cell: facets of its fine simplices that
        # appear exactly once within the cell
        count: dict[tuple, list] = {}
        for srow in range(simps.shape[0]):
            simplex = simps[srow]
            for loc in facet_idx:
                key = tuple(sorted(int(simplex[i]) for i in loc))
                entry = count.setdefault(key, [0, srow, loc])
                entry[0] += 1
        cf: list[int] = []
        cs: list[int] = []
        cn: list[np.ndarray] = []
        for key, (mult, srow, loc) in count.items():
            if mult != 1:
                continue  # interior to the cell
            simplex = simps[srow]
            fnodes = np.array([simplex[i] for i in loc], dtype=int)
            outward = _facet_outward_normal(coords, simplex, fnodes, dim)
            if key in face_of_key:
                fid = face_of_key[key]
                face_cells[fid].append(cid)
                sign = -1
            else:
                fid = len(face_nodes)
                face_of_key[key] = fid
                face_nodes.append(fnodes)
                face_cells.append([cid])
                face_normal.append(outward)
                sign = 1
            cf.append(fid)
            cs.append(sign)
            cn.append(outward)
        order = np.argsort(cf)
        cell_faces.append(np.asarray(cf, dtype=int)[order])
        cell_signs.append(np.asarray(cs, dtype=int)[order])
        cell_normals.append(np.asarray(cn)[order])

    if strict_manifold:
        for fid, inc in enumerate(face_cells):
            if len(inc) > 2:
                raise GridTopologyError(
                    f"face {fid} (nodes {face_nodes[fid].tolist()}) has "
                    f"{len(inc)} incident cells; non-manifold faces are only "
                    "allowed at interfaces to a lower-dimensional grid"
                )

    grid.face_nodes = face_nodes
    grid.face_cells = face_cells
    grid.cell_faces = cell_faces
    grid.cell_face_signs = cell_signs
    grid.cell_face_normals = cell_normals
    grid.face_normal = (
        np.vstack(face_normal) if face_normal else np.zeros((0, grid.ambient_dim))
    )

    n_faces = len(face_nodes)
    grid.face_measure = np.zeros(n_faces)
    grid.face_centroid = np.zeros((n_faces, grid.ambient_dim))
    for fid, fn in enumerate(face_nodes):
        grid.face_measure[fid] = simplex_measures(coords, fn[None, :], dim - 1)[0]
        grid.face_centroid[fid] = coords[fn].mean(axis=0)
    if np.any(grid.face_measure <= 0.0):
        bad = int(np.argmin(grid.face_measure))
        raise DegenerateCellError(f"face {bad} has zero measure")
    grid.fracture_face = np.zeros(n_faces, dtype=bool)
    grid.fracture_side = np.zeros(n_faces, dtype=np.int8)


def _facet_outward_normal(
    coords: np.ndarray, simplex: np.ndarray, facet_nodes: np.ndarray, dim: int
) -> np.ndarray:
    """Outward unit normal of a facet of a fine simplex, ambient coords.

    The normal lies in the simplex's tangent space: it is the component of
    (facet centroid - simplex centroid) orthogonal to the facet span.
    """
    fc = coords[facet_nodes].mean(axis=0)
    sc = coords[simplex].mean(axis=0)
    direction = fc - sc
    if dim >= 2:
        edges = coords[facet_nodes[1:]] - coords[facet_nodes[0]]
        q, _ = np.linalg.qr(edges.T)  # orthonormal basis of the facet span
        direction = direction - q @ (q.T @ direction)
    nrm = np.linalg.norm(direction)
    if nrm == 0.0:
        raise DegenerateCellError(
            f"cannot orient facet {facet_nodes.tolist()} of a degenerate simplex"
        )
    return direction / nrm


# ---------------------------------------------------------------------------
# tangent frames
# ---------------------------------------------------------------------------


def tangent_frame(grid: DimGrid, cell: int, tol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of a cell's tangent space, shape ``(dim, N)``.

    For full-dimensional cells this is the canonical frame. Lower
    dimensional cells must be flat: nodes may deviate from the fitted
    ``dim``-plane by at most ``tol * cell_diameter`` (default ``1e-8``).

    Raises:
        PlanarityError: the cell nodes do not span a flat ``dim``-plane
            within tolerance.
    """
    dim, amb = grid.dim, grid.ambient_dim
    if dim < 1:
        raise GridTopologyError("tangent frames are defined for dim >= 1")
    if dim == amb:
        return np.eye(amb)
    if tol is None:
        tol = grid.planarity_tol

    pts = grid.node_coords[grid.cell_nodes(cell)]
    centered = pts - pts.mean(axis=0)
    # SVD fit: leading right-singular vectors span the cell plane
    _, svals, vt = np.linalg.svd(centered, full_matrices=True)
    frame = vt[:dim]
    offplane = centered @ vt[dim:].T
    h = grid.cell_diameter[cell]
    dev = np.abs(offplane).max() if offplane.size else 0.0
    if dev > tol * h:
        raise PlanarityError(
            f"cell {cell} of the {dim}d grid deviates from a flat plane by "
            f"{dev:.3e} (> {tol:.1e} * h_E = {tol * h:.3e})"
        )
    return frame


# ---------------------------------------------------------------------------
# point location
# ---------------------------------------------------------------------------


def locate_points(
    grid: DimGrid, points: np.ndarray, tol: float = 1e-10
) -> np.ndarray:
    """Map points to the containing cell via the stored fine simplices.

    For embedded grids (``dim < N``) a point matches a simplex when its
    distance to the simplex plane and its barycentric coordinates are
    within tolerance. Returns ``-1`` for points in no cell.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    simps, owner = grid.all_fine_simplices()
    out = np.full(points.shape[0], -1, dtype=int)
    if simps.shape[0] == 0:
        return out
    coords = grid.node_coords
    dim = grid.dim

    if dim == 0:
        scale = 1.0
        cents = grid.cell_centroid
        for i, p in enumerate(points):
            d = np.linalg.norm(cents - p, axis=1)
            j = int(np.argmin(d))
            if d[j] <= max(tol, tol * scale):
                out[i] = j
        return out

    v0 = coords[simps[:, 0]]
    edges = coords[simps[:, 1:]] - v0[:, None, :]  # (n, dim, N)
    gram = np.einsum("nik,njk->nij", edges, edges)
    ginv = np.linalg.inv(gram)
    diam = np.sqrt(np.einsum("nik,nik->n", edges, edges).max(axis=-1))

    for i, p in enumerate(points):
        rhs = np.einsum("nik,nk->ni", edges, p - v0)
        lam = np.einsum("nij,nj->ni", ginv, rhs)  # barycentric (without lam0)
        lam0 = 1.0 - lam.sum(axis=1)
        inside = (lam.min(axis=1) >= -tol) & (lam0 >= -tol)
        if grid.dim < grid.ambient_dim:
            proj = v0 + np.einsum("ni,nik->nk", lam, edges)
            dist = np.linalg.norm(proj - p, axis=1)
            inside &= dist <= np.maximum(tol, tol * diam) + 1e-9 * diam
        hits = np.nonzero(inside)[0]
        if hits.size:
            out[i] = owner[hits[0]]
    return out


# ---------------------------------------------------------------------------
# coupling construction
# ---------------------------------------------------------------------------


def match_interface_faces(
    high: DimGrid, low: DimGrid, tol: float = 1e-8
) -> list[tuple[int, int]]:
    """Geometric matching of high-grid faces with low-grid cells.

    Returns (face_id, low_cell_id) pairs. A face matches when its centroid
    coincides with a low-cell centroid within ``tol`` times the local
    diameter, or (for agglomerated low grids) when the centroid lies inside
    a low cell.
    """
    if low.num_cells == 0 or high.num_faces == 0:
        return []
    from scipy.spatial import cKDTree

    scale = max(float(np.max(low.cell_diameter)), 1e-30)
    tree = cKDTree(low.cell_centroid)
    dist, idx = tree.query(high.face_centroid)
    matches = []
    unmatched_faces = []
    for fid in range(high.num_faces):
        if dist[fid] <= tol * max(scale, 1.0e-300):
            matches.append((fid, int(idx[fid])))
        else:
            unmatched_faces.append(fid)
    matched_lows = {m[1] for m in matches}
    if len(matched_lows) < low.num_cells and unmatched_faces:
        # low cells without a centroid twin: agglomerated low grid, fall
        # back to point location of the face centroids
        cand = np.asarray(unmatched_faces, dtype=int)
        hit = locate_points(low, high.face_centroid[cand], tol=tol)
        for fid, cell in zip(cand, hit):
            if cell >= 0:
                matches.append((int(fid), int(cell)))
    return matches


def attach_coupling(high: DimGrid, low: DimGrid, tol: float = 1e-8) -> CouplingMap:
    """Pair high-grid faces with coinciding low-grid cells, splitting faces.

    Every matched face is split into one face entity per incident cell.
    Each split face keeps the original nodes and geometry but belongs to a
    single cell; its normal is replaced by that cell's outward normal (so
    the flux dof measures flow towards the low-dimensional cell) and its
    orientation sign becomes ``+1``. The face is flagged as a fracture face
    and labelled with the side of the low cell it sits on.

    Raises:
        NonConformingMeshError: a low cell matches no high face.
    """
    matches = match_interface_faces(high, low, tol)
    by_face: dict[int, int] = {}
    for fid, lcell in matches:
        by_face[fid] = lcell

    matched_low = np.zeros(low.num_cells, dtype=bool)
    pairs_face: list[int] = []
    pairs_low: list[int] = []
    pairs_side: list[int] = []
    pairs_area: list[float] = []

    refs = _side_reference_normals(high, low, by_face)

    for fid in sorted(by_face):
        lcell = by_face[fid]
        matched_low[lcell] = True
        incident = list(high.face_cells[fid])
        # make copies for every incident cell after the first, then orient
        face_of_cell = [(fid, incident[0])] if incident else []
        for cid in incident[1:]:
            new_fid = _append_face_copy(high, fid)
            _replace_cell_face(high, cid, fid, new_fid)
            face_of_cell.append((new_fid, cid))
        for new_fid, cid in face_of_cell:
            _make_single_sided(high, new_fid, cid)
            side = _side_label(high, low, cid, lcell, refs)
            high.fracture_face[new_fid] = True
            high.fracture_side[new_fid] = side
            pairs_face.append(new_fid)
            pairs_low.append(lcell)
            pairs_side.append(side)
            pairs_area.append(float(high.face_measure[new_fid]))

    if not np.all(matched_low):
        missing = np.nonzero(~matched_low)[0]
        raise NonConformingMeshError(
            f"non-conforming mesh: {missing.size} cell(s) of the {low.dim}d "
            f"grid match no face of the {high.dim}d grid "
            f"(first: cell {int(missing[0])} at "
            f"{low.cell_centroid[int(missing[0])].tolist()})"
        )

    return CouplingMap(
        high_dim=high.dim,
        high_face=np.asarray(pairs_face, dtype=int),
        low_cell=np.asarray(pairs_low, dtype=int),
        side=np.asarray(pairs_side, dtype=np.int8),
        mortar_area=np.asarray(pairs_area),
    )


def _append_face_copy(grid: DimGrid, fid: int) -> int:
    new_fid = grid.num_faces
    grid.face_nodes.append(grid.face_nodes[fid].copy())
    grid.face_measure = np.append(grid.face_measure, grid.face_measure[fid])
    grid.face_centroid = np.vstack([grid.face_centroid, grid.face_centroid[fid]])
    grid.face_normal = np.vstack([grid.face_normal, grid.face_normal[fid]])
    grid.face_cells.append([])
    grid.fracture_face = np.append(grid.fracture_face, False)
    grid.fracture_side = np.append(grid.fracture_side, np.int8(0))
    return new_fid


def _replace_cell_face(grid: DimGrid, cid: int, old_fid: int, new_fid: int) -> None:
    cf = grid.cell_faces[cid]
    pos = np.nonzero(cf == old_fid)[0]
    cf = cf.copy()
    cf[pos[0]] = new_fid
    grid.cell_faces[cid] = cf
    grid.face_cells[old_fid].remove(cid)
    grid.face_cells[new_fid] = [cid]


def _make_single_sided(grid: DimGrid, fid: int, cid: int) -> None:
    """Orient a (possibly split) face outward from its single cell."""
    cf = grid.cell_faces[cid]
    pos = int(np.nonzero(cf == fid)[0][0])
    outward = grid.cell_face_normals[cid][pos]
    grid.face_normal[fid] = outward
    signs = grid.cell_face_signs[cid].copy()
    signs[pos] = 1
    grid.cell_face_signs[cid] = signs
    grid.face_cells[fid] = [cid]


def _side_reference_normals(
    high: DimGrid, low: DimGrid, by_face: dict[int, int]
) -> np.ndarray:
    """One reference direction per low cell, fixing the +/- convention.

    The label itself is a bookkeeping convention; only the sum over sides
    enters the equations. For codimension-one interfaces the reference is
    the low cell's unique (up to sign) normal; for lower-dimensional
    intersections an arbitrary deterministic perpendicular is used.
    """
    amb = low.ambient_dim
    refs = np.zeros((low.num_cells, amb))
    for fid, lcell in by_face.items():
        if np.any(refs[lcell]):
            continue
        cid = high.face_cells[fid][0] if high.face_cells[fid] else None
        if cid is None:
            continue
        direction = high.cell_centroid[cid] - low.cell_centroid[lcell]
        if low.dim >= 1:
            fr = low.frame(lcell)
            direction = direction - fr.T @ (fr @ direction)
        nrm = np.linalg.norm(direction)
        if nrm > 0:
            refs[lcell] = direction / nrm
    return refs


def _side_label(
    high: DimGrid, low: DimGrid, cid: int, lcell: int, refs: np.ndarray
) -> int:
    direction = high.cell_centroid[cid] - low.cell_centroid[lcell]
    s = float(direction @ refs[lcell])
    return 1 if s >= 0 else -1


# ---------------------------------------------------------------------------
# the mixed-dimensional bundle
# ---------------------------------------------------------------------------


class DofLayout:
    """Global offsets of flux and pressure unknowns, dimensions descending.

    Flux dofs exist for every face of every grid with ``dim >= 1`` (the
    0d velocity block is eliminated); pressure dofs for every cell of
    every grid.
    """

    def __init__(self, grids: dict[int, DimGrid]):
        self.flux_offset: dict[int, int] = {}
        self.pressure_offset: dict[int, int] = {}
        self.num_flux: dict[int, int] = {}
        self.num_pressure: dict[int, int] = {}
        offset = 0
        for d in sorted(grids, reverse=True):
            g = grids[d]
            if d >= 1:
                self.flux_offset[d] = offset
                self.num_flux[d] = g.num_faces
                offset += g.num_faces
            else:
                self.num_flux[d] = 0
            self.pressure_offset[d] = offset
            self.num_pressure[d] = g.num_cells
            offset += g.num_cells
        self.total = offset

    def flux_index(self, d: int, face) -> np.ndarray:
        return self.flux_offset[d] + np.asarray(face, dtype=int)

    def pressure_index(self, d: int, cell) -> np.ndarray:
        return self.pressure_offset[d] + np.asarray(cell, dtype=int)


class MixedDimGrid:
    """Hierarchy of per-dimension grids with couplings and boundary tags.

    Parameters:
        grids: mapping dimension -> :class:`DimGrid`. Dimensions present
            must be consecutive from the top dimension downwards whenever
            they are coupled.
        couplings: mapping high dimension ``d`` -> :class:`CouplingMap`
            between the grids of dimension ``d`` and ``d - 1``.

    The constructor classifies boundary faces of every grid into the outer
    part (``boundary_out``, touching the hull of the top-dimensional grid)
    and the immersed part (``boundary_in``, fracture tips), and freezes the
    dof layout.
    """

    def __init__(
        self,
        grids: dict[int, DimGrid],
        couplings: Optional[dict[int, CouplingMap]] = None,
    ):
        if not grids:
            raise GridTopologyError("at least one grid is required")
        self.grids = dict(sorted(grids.items(), reverse=True))
        self.couplings = couplings or {}
        self.ambient_dim = grids[max(grids)].ambient_dim
        dims = sorted(grids, reverse=True)
        for d in self.couplings:
            if d not in grids or d - 1 not in grids:
                raise GridTopologyError(
                    f"coupling {d}->{d - 1} references a missing grid"
                )
        for hi, lo in zip(dims[:-1], dims[1:]):
            if hi - lo != 1:
                raise GridTopologyError(
                    f"grid dimensions must be consecutive, got {hi} and {lo}"
                )
        self.dof_layout = DofLayout(self.grids)
        self.boundary_out: dict[int, np.ndarray] = {}
        self.boundary_in: dict[int, np.ndarray] = {}
        self._classify_boundaries()

    @property
    def top_dim(self) -> int:
        return max(self.grids)

    @property
    def dims(self) -> list[int]:
        return sorted(self.grids, reverse=True)

    def coupling_above(self, d: int) -> Optional[CouplingMap]:
        """Coupling whose low grid has dimension ``d`` (i.e. map ``d+1 -> d``)."""
        return self.couplings.get(d + 1)

    def _classify_boundaries(self) -> None:
        top = self.grids[self.top_dim]
        hull_keys: set[tuple] = set()
        decimals = 12
        for fid in top.boundary_faces():
            for nid in top.face_nodes[fid]:
                hull_keys.add(tuple(np.round(top.node_coords[nid], decimals)))

        for d, g in self.grids.items():
            n_faces = g.num_faces
            out = np.zeros(n_faces, dtype=bool)
            inn = np.zeros(n_faces, dtype=bool)
            if d == self.top_dim:
                out[g.boundary_faces()] = True
            elif d >= 1:
                for fid in g.boundary_faces():
                    keys = [
                        tuple(np.round(g.node_coords[nid], decimals))
                        for nid in g.face_nodes[fid]
                    ]
                    if all(k in hull_keys for k in keys):
                        out[fid] = True
                    else:
                        inn[fid] = True
            self.boundary_out[d] = out
            self.boundary_in[d] = inn

    def tip_faces(self, d: int) -> np.ndarray:
        """Faces of the ``d``-grid carrying the zero-flux tip condition."""
        return np.nonzero(self.boundary_in[d])[0]


def coupled_faces_of_cells(cmap: CouplingMap, num_low_cells: int) -> list[np.ndarray]:
    """Pair indices grouped by low cell."""
    groups: list[list[int]] = [[] for _ in range(num_low_cells)]
    for k, lc in enumerate(cmap.low_cell):
        groups[int(lc)].append(k)
    return [np.asarray(g, dtype=int) for g in groups]
