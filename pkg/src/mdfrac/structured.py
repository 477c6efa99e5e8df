"""Structured reference meshes for tests, demos and convergence studies.

Nothing here calls an external mesh generator: the grids are regular
lattice triangulations, and fracture grids are obtained as mesh traces —
the faces of the bulk grid that lie exactly on a prescribed segment or
plane — so bulk and fracture grids are conforming by construction.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from mdfrac.errors import GridTopologyError
from mdfrac.mdgrid import DimGrid, MixedDimGrid, attach_coupling, build_dim_grid

__all__ = [
    "unit_square_triangulation",
    "unit_cube_tetrahedra",
    "fractured_square_grid",
    "fractured_cube_grid",
    "load_segments",
]

Segment = tuple[tuple[float, float], tuple[float, float]]


def unit_square_triangulation(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform triangulation of the unit square, 2 n^2 triangles.

    Each lattice square is split along its south-west to north-east
    diagonal.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            a, b = nid(i, j), nid(i + 1, j)
            c, d = nid(i + 1, j + 1), nid(i, j + 1)
            tris.append([a, b, c])
            tris.append([a, c, d])
    return nodes, np.asarray(tris, dtype=int)


def unit_cube_tetrahedra(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform tetrahedralization of the unit cube, 6 n^3 tets per Kuhn split."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def nid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    # the 6 tets of the Kuhn subdivision: paths from (0,0,0) to (1,1,1)
    paths = [
        (0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
    ]
    tets = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                base = np.array([i, j, k])
                for path in paths:
                    vs = [base.copy()]
                    cur = base.copy()
                    for ax in path:
                        cur = cur.copy()
                        cur[ax] += 1
                        vs.append(cur)
                    tets.append([nid(*v) for v in vs])
    return nodes, np.asarray(tets, dtype=int)


def _on_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    d = b - a
    L = np.linalg.norm(d)
    r = p - a
    cross = d[0] * r[1] - d[1] * r[0]
    if abs(cross) > tol * L:
        return False
    t = (r @ d) / (L * L)
    return -tol <= t <= 1.0 + tol


def _trace_faces(
    grid: DimGrid, on_locus, tol: float = 1e-10
) -> list[int]:
    """Face ids of ``grid`` whose nodes all satisfy the locus predicate."""
    coords = grid.node_coords
    node_on = {}
    hits = []
    for fid in range(grid.num_faces):
        ok = True
        for nid in grid.face_nodes[fid]:
            if nid not in node_on:
                node_on[nid] = on_locus(coords[nid])
            if not node_on[nid]:
                ok = False
                break
        if ok:
            hits.append(fid)
    return hits


def _subgrid_from_faces(
    grid: DimGrid, face_ids: Sequence[int], dim: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Extract node coords / connectivity of a set of faces as its own grid.

    Returns (nodes, cells, used_node_ids); cells index into the new node
    array, ``used_node_ids`` maps back into the parent grid.
    """
    used = sorted({int(n) for fid in face_ids for n in grid.face_nodes[fid]})
    renum = {g: l for l, g in enumerate(used)}
    cells = np.array(
        [[renum[int(n)] for n in grid.face_nodes[fid]] for fid in face_ids],
        dtype=int,
    )
    return grid.node_coords[np.asarray(used)], cells, np.asarray(used)


def fractured_square_grid(
    n: int, segments: Sequence[Segment], tol: float = 1e-10
) -> MixedDimGrid:
    """Unit-square triangulation with fractures along mesh-conforming segments.

    Each segment must coincide with a chain of mesh edges of the ``n`` by
    ``n`` lattice triangulation (axis-aligned segments on lattice lines, or
    diagonal segments along the south-west/north-east mesh diagonals).
    Intersections between distinct segments become point cells, including
    T-junctions where one segment ends on another.

    Raises:
        GridTopologyError: a segment does not lie on mesh edges.
    """
    nodes, tris = unit_square_triangulation(n)
    g2 = build_dim_grid(nodes, tris, dim=2)
    if not segments:
        return MixedDimGrid({2: g2})

    edge_seg: dict[int, int] = {}  # 2d face id -> owning segment
    for s_id, (p0, p1) in enumerate(segments):
        a = np.asarray(p0, dtype=float)
        b = np.asarray(p1, dtype=float)
        fids = _trace_faces(g2, lambda p: _on_segment(p, a, b, tol))
        if not fids:
            raise GridTopologyError(
                f"segment {s_id} {p0}-{p1} does not lie on mesh edges of the "
                f"{n}x{n} triangulation"
            )
        # verify the trace covers the whole segment
        length = sum(g2.face_measure[f] for f in fids)
        if abs(length - np.linalg.norm(b - a)) > 1e-8:
            raise GridTopologyError(
                f"segment {s_id} {p0}-{p1} is only partially resolved by mesh "
                f"edges (got length {length})"
            )
        for f in fids:
            edge_seg.setdefault(f, s_id)

    fids = sorted(edge_seg)
    n1, c1, used = _subgrid_from_faces(g2, fids, dim=1)
    g1 = build_dim_grid(n1, c1, dim=1, ambient_dim=2, strict_manifold=False)

    # intersection points: 1d nodes touched by cells of distinct segments
    segs_at_node: dict[int, set[int]] = {}
    for local_cell, fid in enumerate(fids):
        for nd in c1[local_cell]:
            segs_at_node.setdefault(int(nd), set()).add(edge_seg[fid])
    xpoints = sorted(nd for nd, ss in segs_at_node.items() if len(ss) >= 2)

    grids: dict[int, DimGrid] = {2: g2, 1: g1}
    couplings = {2: attach_coupling(g2, g1)}
    if xpoints:
        p0 = n1[np.asarray(xpoints)]
        g0 = build_dim_grid(
            p0, np.arange(len(xpoints), dtype=int)[:, None], dim=0, ambient_dim=2
        )
        grids[0] = g0
        couplings[1] = attach_coupling(g1, g0)
    return MixedDimGrid(grids, couplings)


def fractured_cube_grid(
    n: int, axis: int = 0, offset: float = 0.5, tol: float = 1e-10
) -> MixedDimGrid:
    """Unit-cube tetrahedralization with one planar fracture.

    The fracture is the full cross-section ``x[axis] = offset``, which must
    be a lattice plane (``offset * n`` integral).
    """
    if abs(offset * n - round(offset * n)) > 1e-9:
        raise GridTopologyError(
            f"offset {offset} is not a lattice plane of the {n}^3 grid"
        )
    nodes, tets = unit_cube_tetrahedra(n)
    g3 = build_dim_grid(nodes, tets, dim=3)
    fids = _trace_faces(g3, lambda p: abs(p[axis] - offset) <= tol)
    n2, c2, _ = _subgrid_from_faces(g3, fids, dim=2)
    g2 = build_dim_grid(n2, c2, dim=2, ambient_dim=3)
    cmap = attach_coupling(g3, g2)
    return MixedDimGrid({3: g3, 2: g2}, {3: cmap})


def as_gmsh(
    n: int,
    segments: Sequence[Segment] = (),
    matrix_tag: int = 1,
    fracture_tag_base: int = 10,
    tol: float = 1e-10,
):
    """Lattice triangulation of the unit square as an in-memory MSH mesh.

    Triangles carry ``matrix_tag``; the mesh edges tracing segment ``i``
    become line elements with tag ``fracture_tag_base + i``. Useful to
    exercise the file-based pipeline without an external mesh generator.
    """
    from mdfrac.meshio import GmshElement, GmshMesh

    nodes, tris = unit_square_triangulation(n)
    g2 = build_dim_grid(nodes, tris, dim=2)
    coords3 = np.column_stack([nodes, np.zeros(len(nodes))])
    elements = []
    eid = 1
    for s_id, (p0, p1) in enumerate(segments):
        a = np.asarray(p0, dtype=float)
        b = np.asarray(p1, dtype=float)
        fids = _trace_faces(g2, lambda p: _on_segment(p, a, b, tol))
        if not fids:
            raise GridTopologyError(
                f"segment {s_id} {p0}-{p1} does not lie on mesh edges"
            )
        for f in fids:
            fn = g2.face_nodes[f]
            elements.append(
                GmshElement(
                    elem_id=eid,
                    elem_type=1,
                    physical_tag=fracture_tag_base + s_id,
                    geometric_tag=fracture_tag_base + s_id,
                    nodes=tuple(int(v) + 1 for v in fn),
                )
            )
            eid += 1
    for row in tris:
        elements.append(
            GmshElement(
                elem_id=eid,
                elem_type=2,
                physical_tag=matrix_tag,
                geometric_tag=matrix_tag,
                nodes=tuple(int(v) + 1 for v in row),
            )
        )
        eid += 1
    return GmshMesh(
        node_ids=np.arange(1, len(nodes) + 1),
        node_coords=coords3,
        elements=elements,
        physical_names={matrix_tag: "matrix"},
    )


def as_gmsh_cube(
    n: int,
    axis: int = 0,
    offset: float = 0.5,
    matrix_tag: int = 1,
    fracture_tag: int = 10,
    tol: float = 1e-10,
):
    """Unit-cube tetrahedralization with one tagged fracture plane, as MSH."""
    from mdfrac.meshio import GmshElement, GmshMesh

    nodes, tets = unit_cube_tetrahedra(n)
    g3 = build_dim_grid(nodes, tets, dim=3)
    fids = _trace_faces(g3, lambda p: abs(p[axis] - offset) <= tol)
    elements = []
    eid = 1
    for f in fids:
        fn = g3.face_nodes[f]
        elements.append(
            GmshElement(
                elem_id=eid,
                elem_type=2,
                physical_tag=fracture_tag,
                geometric_tag=fracture_tag,
                nodes=tuple(int(v) + 1 for v in fn),
            )
        )
        eid += 1
    for row in tets:
        elements.append(
            GmshElement(
                elem_id=eid,
                elem_type=4,
                physical_tag=matrix_tag,
                geometric_tag=matrix_tag,
                nodes=tuple(int(v) + 1 for v in row),
            )
        )
        eid += 1
    return GmshMesh(
        node_ids=np.arange(1, len(nodes) + 1),
        node_coords=nodes,
        elements=elements,
        physical_names={matrix_tag: "matrix", fracture_tag: "fracture"},
    )


def load_segments(path) -> list[Segment]:
    """Read fracture segments from a text file, one ``x0 y0 x1 y1`` per line.

    Blank lines and ``#`` comments are skipped.
    """
    segments: list[Segment] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 4:
                raise GridTopologyError(
                    f"{path}:{lineno}: expected 'x0 y0 x1 y1', got {line!r}"
                )
            x0, y0, x1, y1 = map(float, parts)
            segments.append(((x0, y0), (x1, y1)))
    return segments
