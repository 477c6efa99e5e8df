"""Mesh input, mixed-dimensional grid construction, and result export.

Input is the Gmsh MSH 2.2 ASCII format, where fractures are the
lower-dimensional elements carrying a physical tag. Intersections between
fractures do not need to be tagged: they are detected from shared mesh
entities (shared nodes of distinct fracture lines in 2d, shared edges of
distinct fracture surfaces in 3d, then shared nodes of those intersection
lines).

Output is VTK XML unstructured grids (one file per dimension plus a ``.pvd``
collection), with agglomerated cells written as polygons / polyhedra, and
plain CSV for line samples.
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from mdfrac.errors import GridTopologyError, MeshFormatError
from mdfrac.mdgrid import (
    DimGrid,
    MixedDimGrid,
    attach_coupling,
    build_dim_grid,
    locate_points,
)

__all__ = [
    "GmshElement",
    "GmshMesh",
    "parse_gmsh",
    "write_msh",
    "build_mixed_grid",
    "write_vtu",
    "write_pvd",
    "export_vtu",
    "sample_over_line",
    "write_csv",
]

# element types of MSH 2.2 that we understand
ELEMENT_DIM = {15: 0, 1: 1, 2: 2, 4: 3}
ELEMENT_NNODES = {15: 1, 1: 2, 2: 3, 4: 4}
ELEMENT_NAME = {15: "point", 1: "line", 2: "triangle", 4: "tetrahedron"}


@dataclass
class GmshElement:
    elem_id: int
    elem_type: int
    physical_tag: int
    geometric_tag: int
    nodes: tuple[int, ...]  # original node ids

    @property
    def dim(self) -> int:
        return ELEMENT_DIM[self.elem_type]


@dataclass
class GmshMesh:
    """Contents of an MSH 2.2 file, with original ids preserved."""

    node_ids: np.ndarray
    node_coords: np.ndarray  # (n, 3) as stored in the file
    elements: list[GmshElement]
    physical_names: dict[int, str] = field(default_factory=dict)

    def elements_of_dim(self, d: int) -> list[GmshElement]:
        return [e for e in self.elements if e.dim == d]

    @property
    def top_dim(self) -> int:
        if not self.elements:
            raise MeshFormatError("mesh contains no elements")
        return max(e.dim for e in self.elements)


def parse_gmsh(path) -> GmshMesh:
    """Read an MSH 2.2 ASCII file.

    Raises:
        MeshFormatError: wrong version (4.x files need conversion with
            ``gmsh -save -format msh2``), binary payload, unsupported
            element types, or malformed sections.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    pos = 0
    n_lines = len(lines)

    def next_line() -> str:
        nonlocal pos
        while pos < n_lines and not lines[pos].strip():
            pos += 1
        if pos >= n_lines:
            raise MeshFormatError(f"{path}: unexpected end of file")
        out = lines[pos].strip()
        pos += 1
        return out

    node_ids: list[int] = []
    coords: list[tuple[float, float, float]] = []
    elements: list[GmshElement] = []
    names: dict[int, str] = {}
    seen_format = False

    while True:
        while pos < n_lines and not lines[pos].strip():
            pos += 1
        if pos >= n_lines:
            break
        section = next_line()
        if not section.startswith("$"):
            raise MeshFormatError(f"{path}:{pos}: expected a section, got {section!r}")
        name = section[1:]

        if name == "MeshFormat":
            fmt = next_line().split()
            if len(fmt) != 3:
                raise MeshFormatError(f"{path}: malformed $MeshFormat line")
            version, file_type = fmt[0], fmt[1]
            if version.startswith("4"):
                raise MeshFormatError(
                    f"{path}: MSH version {version} is not supported; re-save "
                    "as version 2.2 (gmsh -save -format msh2)"
                )
            if not version.startswith("2"):
                raise MeshFormatError(f"{path}: unsupported MSH version {version}")
            if file_type != "0":
                raise MeshFormatError(f"{path}: binary MSH files are not supported")
            if next_line() != "$EndMeshFormat":
                raise MeshFormatError(f"{path}: unterminated $MeshFormat")
            seen_format = True

        elif name == "PhysicalNames":
            count = int(next_line())
            for _ in range(count):
                parts = next_line().split(None, 2)
                # dimension, tag, quoted name
                names[int(parts[1])] = parts[2].strip().strip('"')
            if next_line() != "$EndPhysicalNames":
                raise MeshFormatError(f"{path}: unterminated $PhysicalNames")

        elif name == "Nodes":
            count = int(next_line())
            for _ in range(count):
                parts = next_line().split()
                if len(parts) != 4:
                    raise MeshFormatError(
                        f"{path}:{pos}: node line needs 'id x y z'"
                    )
                node_ids.append(int(parts[0]))
                coords.append((float(parts[1]), float(parts[2]), float(parts[3])))
            if next_line() != "$EndNodes":
                raise MeshFormatError(
                    f"{path}: $Nodes declared {count} nodes but more follow"
                )

        elif name == "Elements":
            count = int(next_line())
            unsupported: set[int] = set()
            for _ in range(count):
                parts = [int(p) for p in next_line().split()]
                elem_id, elem_type, n_tags = parts[0], parts[1], parts[2]
                tags = parts[3 : 3 + n_tags]
                node_part = parts[3 + n_tags :]
                if elem_type not in ELEMENT_DIM:
                    unsupported.add(elem_type)
                    continue
                if len(node_part) != ELEMENT_NNODES[elem_type]:
                    raise MeshFormatError(
                        f"{path}:{pos}: element {elem_id} "
                        f"({ELEMENT_NAME[elem_type]}) has {len(node_part)} nodes"
                    )
                elements.append(
                    GmshElement(
                        elem_id=elem_id,
                        elem_type=elem_type,
                        physical_tag=tags[0] if n_tags >= 1 else 0,
                        geometric_tag=tags[1] if n_tags >= 2 else 0,
                        nodes=tuple(node_part),
                    )
                )
            if next_line() != "$EndElements":
                raise MeshFormatError(
                    f"{path}: $Elements declared {count} elements but more follow"
                )
            if unsupported:
                kinds = ", ".join(str(t) for t in sorted(unsupported))
                raise MeshFormatError(
                    f"{path}: unsupported element type(s) {kinds}; only points, "
                    "lines, triangles and tetrahedra are handled"
                )

        else:
            # unknown section: skip to its terminator
            terminator = f"$End{name}"
            while True:
                if pos >= n_lines:
                    raise MeshFormatError(f"{path}: unterminated ${name}")
                if lines[pos].strip() == terminator:
                    pos += 1
                    break
                pos += 1

    if not seen_format:
        raise MeshFormatError(f"{path}: missing $MeshFormat section")
    if not node_ids:
        raise MeshFormatError(f"{path}: missing $Nodes section")

    mesh = GmshMesh(
        node_ids=np.asarray(node_ids, dtype=int),
        node_coords=np.asarray(coords, dtype=float),
        elements=elements,
        physical_names=names,
    )
    index = set(mesh.node_ids.tolist())
    for e in elements:
        for nid in e.nodes:
            if nid not in index:
                raise MeshFormatError(
                    f"{path}: element {e.elem_id} references unknown node {nid}"
                )
    return mesh


def write_msh(mesh: GmshMesh, path) -> None:
    """Write an MSH 2.2 ASCII file that re-parses to identical data.

    Floats are written with ``repr``, which round-trips bit-exactly.
    """
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        if mesh.physical_names:
            fh.write("$PhysicalNames\n%d\n" % len(mesh.physical_names))
            for tag in sorted(mesh.physical_names):
                dim = _physical_dim(mesh, tag)
                fh.write('%d %d "%s"\n' % (dim, tag, mesh.physical_names[tag]))
            fh.write("$EndPhysicalNames\n")
        fh.write("$Nodes\n%d\n" % len(mesh.node_ids))
        for nid, (x, y, z) in zip(mesh.node_ids, mesh.node_coords):
            fh.write(
                "%d %s %s %s\n" % (nid, repr(float(x)), repr(float(y)), repr(float(z)))
            )
        fh.write("$EndNodes\n")
        fh.write("$Elements\n%d\n" % len(mesh.elements))
        for e in mesh.elements:
            row = [e.elem_id, e.elem_type, 2, e.physical_tag, e.geometric_tag]
            row.extend(e.nodes)
            fh.write(" ".join(str(v) for v in row) + "\n")
        fh.write("$EndElements\n")


def _physical_dim(mesh: GmshMesh, tag: int) -> int:
    for e in mesh.elements:
        if e.physical_tag == tag:
            return e.dim
    return 0


# ---------------------------------------------------------------------------
# mixed-dimensional grid construction
# ---------------------------------------------------------------------------


def build_mixed_grid(
    mesh: GmshMesh | str,
    ambient_dim: Optional[int] = None,
) -> MixedDimGrid:
    """Assemble the grid hierarchy of a fractured mesh.

    The top-dimensional elements form the matrix grid. All elements one
    dimension down are fracture cells; their physical tag identifies which
    fracture they belong to. Lower levels are taken from the file when
    tagged elements exist there, and otherwise detected from the fracture
    connectivity (entities shared between distinct fracture tags).
    """
    if not isinstance(mesh, GmshMesh):
        mesh = parse_gmsh(mesh)
    top = mesh.top_dim
    if top < 1:
        raise MeshFormatError("mesh has no cells of dimension >= 1")
    if ambient_dim is None:
        flat = np.allclose(mesh.node_coords[:, 2], 0.0)
        ambient_dim = 2 if (top <= 2 and flat) else 3
    coords = mesh.node_coords[:, :ambient_dim]

    id_to_row = {int(i): r for r, i in enumerate(mesh.node_ids)}

    def rows(e: GmshElement) -> list[int]:
        return [id_to_row[n] for n in e.nodes]

    # matrix grid
    top_cells = np.asarray([rows(e) for e in mesh.elements_of_dim(top)], dtype=int)
    grids: dict[int, DimGrid] = {
        top: _grid_from_rows(coords, top_cells, top, ambient_dim, strict=True)
    }

    # fracture level: explicit elements with a tag per cell
    frac_elems = mesh.elements_of_dim(top - 1)
    if not frac_elems:
        return MixedDimGrid(grids)
    frac_cells = np.asarray([rows(e) for e in frac_elems], dtype=int)
    frac_tags = [e.physical_tag for e in frac_elems]
    grids[top - 1] = _grid_from_rows(
        coords, frac_cells, top - 1, ambient_dim, strict=False
    )

    level_cells = frac_cells
    level_tags = frac_tags
    for d in range(top - 2, -1, -1):
        explicit = mesh.elements_of_dim(d)
        if explicit and any(e.physical_tag != 0 for e in explicit):
            cells = np.asarray([rows(e) for e in explicit], dtype=int)
            tags = [e.physical_tag for e in explicit]
        else:
            cells, tags = _detect_intersections(level_cells, level_tags)
        if len(cells) == 0:
            break
        grids[d] = _grid_from_rows(coords, cells, d, ambient_dim, strict=False)
        level_cells, level_tags = cells, tags

    couplings = {}
    for d in sorted(grids, reverse=True):
        if d - 1 in grids:
            couplings[d] = attach_coupling(grids[d], grids[d - 1])
    return MixedDimGrid(grids, couplings)


def _grid_from_rows(coords, cells, dim, ambient_dim, strict) -> DimGrid:
    """Build a DimGrid on the subset of nodes its cells actually use."""
    cells = np.atleast_2d(np.asarray(cells, dtype=int))
    used = np.unique(cells)
    renum = np.full(coords.shape[0], -1, dtype=int)
    renum[used] = np.arange(used.size)
    return build_dim_grid(
        coords[used],
        renum[cells],
        dim=dim,
        ambient_dim=ambient_dim,
        strict_manifold=strict,
    )


def _detect_intersections(
    cells: np.ndarray, tags: Sequence[int]
) -> tuple[np.ndarray, list]:
    """Entities shared by cells of at least two distinct tags.

    For line cells the shared entities are nodes (giving points); for
    surface cells, edges (giving intersection segments). The returned tag
    of each detected entity is the frozen set of participating fracture
    tags, so a second pass can detect where distinct intersection lines
    meet.
    """
    cells = np.atleast_2d(cells)
    cell_dim = cells.shape[1] - 1
    ent_tags: dict[tuple, set] = defaultdict(set)
    if cell_dim == 1:
        for row, tag in zip(cells, tags):
            for n in row:
                ent_tags[(int(n),)].add(tag)
    elif cell_dim == 2:
        for row, tag in zip(cells, tags):
            a, b, c = (int(v) for v in row)
            for e in ((a, b), (b, c), (a, c)):
                ent_tags[tuple(sorted(e))].add(tag)
    else:
        return np.zeros((0, cell_dim), dtype=int), []

    hits = sorted(k for k, s in ent_tags.items() if len(s) >= 2)
    out_cells = np.asarray(hits, dtype=int).reshape(len(hits), cell_dim)
    out_tags = [frozenset(ent_tags[k]) for k in hits]
    return out_cells, out_tags


# ---------------------------------------------------------------------------
# VTK XML output
# ---------------------------------------------------------------------------

VTK_VERTEX = 1
VTK_LINE = 3
VTK_POLY_LINE = 4
VTK_TRIANGLE = 5
VTK_POLYGON = 7
VTK_TETRA = 10
VTK_POLYHEDRON = 42


def _fmt_floats(arr: np.ndarray, per_line: int = 6) -> str:
    flat = np.asarray(arr, dtype=float).ravel()
    chunks = []
    for i in range(0, flat.size, per_line):
        chunks.append(" ".join("%.16g" % v for v in flat[i : i + per_line]))
    return "\n".join(chunks)


def _fmt_ints(arr, per_line: int = 12) -> str:
    flat = np.asarray(arr, dtype=np.int64).ravel()
    chunks = []
    for i in range(0, flat.size, per_line):
        chunks.append(" ".join(str(v) for v in flat[i : i + per_line]))
    return "\n".join(chunks)


def _euler_outline(edges: list[tuple[int, int]]) -> Optional[list[int]]:
    """Closed walk through every boundary edge once (polygon outline).

    Returns None when the boundary is disconnected (e.g. a cell with a
    hole), which a single polygon cannot represent.
    """
    adj: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for idx, (a, b) in enumerate(edges):
        adj[a].append((idx, b))
        adj[b].append((idx, a))
    for v in adj.values():
        v.sort(reverse=True)
    used = [False] * len(edges)
    start = min(adj)
    stack = [start]
    path: list[int] = []
    while stack:
        v = stack[-1]
        bucket = adj[v]
        while bucket and used[bucket[-1][0]]:
            bucket.pop()
        if bucket:
            idx, w = bucket.pop()
            used[idx] = True
            stack.append(w)
        else:
            path.append(stack.pop())
    if not all(used):
        return None
    return path[:-1]


def _chain_order(edges: list[tuple[int, int]]) -> list[int]:
    """Order the nodes of a 1d cell's segments into a polyline."""
    deg: dict[int, list[int]] = defaultdict(list)
    for a, b in edges:
        deg[a].append(b)
        deg[b].append(a)
    ends = sorted(n for n, nb in deg.items() if len(nb) == 1)
    cur = ends[0] if ends else min(deg)
    seen_edges = set()
    path = [cur]
    while True:
        nxt = None
        for cand in sorted(deg[cur]):
            if (cur, cand) not in seen_edges and (cand, cur) not in seen_edges:
                nxt = cand
                break
        if nxt is None:
            break
        seen_edges.add((cur, nxt))
        path.append(nxt)
        cur = nxt
        if len(path) > len(edges) + 1:
            break
    return path


def write_vtu(grid: DimGrid, path, cell_data: Optional[dict] = None) -> None:
    """Write one grid as a VTK XML unstructured grid file.

    Simplicial cells map to the native VTK types; agglomerated cells are
    written as polylines, polygons or polyhedra. Cells whose outline cannot
    be expressed by the VTK type (a 2d cell with a hole) fall back to their
    fine simplices, replicating the cell data.
    """
    cell_data = cell_data or {}
    conn: list[int] = []
    offsets: list[int] = []
    types: list[int] = []
    faces: list[int] = []
    face_offsets: list[int] = []
    repeat: list[int] = []  # source cell of each written VTK cell

    def push(cell_id: int, vtk_type: int, nodes: Sequence[int], fstream=None) -> None:
        conn.extend(int(n) for n in nodes)
        offsets.append(len(conn))
        types.append(vtk_type)
        repeat.append(cell_id)
        if fstream is not None:
            faces.extend(fstream)
            face_offsets.append(len(faces))
        elif face_offsets or faces:
            face_offsets.append(len(faces))

    any_polyhedron = False
    for c in range(grid.num_cells):
        simps = grid.cell_simplices[c]
        if grid.dim == 0:
            push(c, VTK_VERTEX, [simps[0][0]])
        elif simps.shape[0] == 1:
            kind = {1: VTK_LINE, 2: VTK_TRIANGLE, 3: VTK_TETRA}[grid.dim]
            push(c, kind, simps[0])
        elif grid.dim == 1:
            segs = [tuple(int(v) for v in row) for row in simps]
            push(c, VTK_POLY_LINE, _chain_order(segs))
        elif grid.dim == 2:
            edges = [
                (int(grid.face_nodes[f][0]), int(grid.face_nodes[f][1]))
                for f in grid.cell_faces[c]
            ]
            outline = _euler_outline(edges)
            if outline is None:
                for row in simps:
                    push(c, VTK_TRIANGLE, row)
            else:
                push(c, VTK_POLYGON, outline)
        else:
            any_polyhedron = True
            fstream: list[int] = [len(grid.cell_faces[c])]
            nodeset = []
            for f in grid.cell_faces[c]:
                fn = grid.face_nodes[f]
                fstream.append(len(fn))
                fstream.extend(int(v) for v in fn)
                nodeset.extend(int(v) for v in fn)
            push(c, VTK_POLYHEDRON, sorted(set(nodeset)), fstream)

    pts = np.zeros((grid.num_nodes, 3))
    pts[:, : grid.ambient_dim] = grid.node_coords

    with open(path, "w") as fh:
        fh.write('<?xml version="1.0"?>\n')
        fh.write(
            '<VTKFile type="UnstructuredGrid" version="1.0" '
            'byte_order="LittleEndian">\n'
        )
        fh.write("  <UnstructuredGrid>\n")
        fh.write(
            '    <Piece NumberOfPoints="%d" NumberOfCells="%d">\n'
            % (grid.num_nodes, len(types))
        )
        fh.write("      <Points>\n")
        fh.write(
            '        <DataArray type="Float64" NumberOfComponents="3" '
            'format="ascii">\n'
        )
        fh.write(_fmt_floats(pts) + "\n")
        fh.write("        </DataArray>\n      </Points>\n")
        fh.write("      <Cells>\n")
        fh.write('        <DataArray type="Int64" Name="connectivity" format="ascii">\n')
        fh.write(_fmt_ints(conn) + "\n")
        fh.write("        </DataArray>\n")
        fh.write('        <DataArray type="Int64" Name="offsets" format="ascii">\n')
        fh.write(_fmt_ints(offsets) + "\n")
        fh.write("        </DataArray>\n")
        fh.write('        <DataArray type="UInt8" Name="types" format="ascii">\n')
        fh.write(_fmt_ints(types) + "\n")
        fh.write("        </DataArray>\n")
        if any_polyhedron:
            fh.write('        <DataArray type="Int64" Name="faces" format="ascii">\n')
            fh.write(_fmt_ints(faces) + "\n")
            fh.write("        </DataArray>\n")
            fh.write(
                '        <DataArray type="Int64" Name="faceoffsets" format="ascii">\n'
            )
            fh.write(_fmt_ints(face_offsets) + "\n")
            fh.write("        </DataArray>\n")
        fh.write("      </Cells>\n")
        fh.write("      <CellData>\n")
        rep = np.asarray(repeat, dtype=int)
        for name, values in cell_data.items():
            values = np.asarray(values)
            if values.shape[0] != grid.num_cells:
                raise GridTopologyError(
                    f"cell data {name!r} has {values.shape[0]} entries for "
                    f"{grid.num_cells} cells"
                )
            expanded = values[rep]
            if np.issubdtype(expanded.dtype, np.integer):
                fh.write(
                    '        <DataArray type="Int64" Name="%s" format="ascii">\n'
                    % name
                )
                fh.write(_fmt_ints(expanded) + "\n")
            else:
                fh.write(
                    '        <DataArray type="Float64" Name="%s" format="ascii">\n'
                    % name
                )
                fh.write(_fmt_floats(expanded) + "\n")
            fh.write("        </DataArray>\n")
        fh.write("      </CellData>\n")
        fh.write("    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n")


def write_pvd(path, entries: Sequence[tuple[float, int, str]]) -> None:
    """Write a ParaView collection file.

    ``entries`` rows are (time, part, relative file path).
    """
    with open(path, "w") as fh:
        fh.write('<?xml version="1.0"?>\n')
        fh.write('<VTKFile type="Collection" version="0.1">\n  <Collection>\n')
        for time, part, ref in entries:
            fh.write(
                '    <DataSet timestep="%s" part="%d" file="%s"/>\n'
                % ("%.16g" % time, part, ref)
            )
        fh.write("  </Collection>\n</VTKFile>\n")


def export_vtu(
    md: MixedDimGrid,
    directory,
    basename: str,
    fields: Optional[dict[int, dict]] = None,
    time: Optional[float] = None,
    step: Optional[int] = None,
) -> list[tuple[float, int, str]]:
    """Write one VTU per dimension plus a collection file.

    ``fields`` maps dimension -> {name -> per-cell array}. When ``step`` is
    given the files are suffixed with the step index so a time series can
    accumulate; the returned entries can be merged and passed to
    :func:`write_pvd`.
    """
    os.makedirs(directory, exist_ok=True)
    fields = fields or {}
    suffix = "" if step is None else "_%06d" % step
    entries = []
    for d in md.dims:
        fname = "%s_%dd%s.vtu" % (basename, d, suffix)
        write_vtu(md.grids[d], os.path.join(directory, fname), fields.get(d))
        entries.append((0.0 if time is None else float(time), d, fname))
    write_pvd(os.path.join(directory, basename + ".pvd"), entries)
    return entries


# ---------------------------------------------------------------------------
# line sampling
# ---------------------------------------------------------------------------


@dataclass
class LineSample:
    points: np.ndarray  # (n, N)
    arclength: np.ndarray  # (n,)
    cell: np.ndarray  # (n,) containing cell id, -1 outside
    values: dict[str, np.ndarray]


def sample_over_line(
    grid: DimGrid,
    fields: dict[str, np.ndarray],
    p0,
    p1,
    num: int = 100,
) -> LineSample:
    """Evaluate piecewise-constant cell fields along a straight line.

    Sample points are uniformly spaced from ``p0`` to ``p1`` inclusive.
    Points outside the grid get NaN values.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    t = np.linspace(0.0, 1.0, num)
    pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
    s = t * np.linalg.norm(p1 - p0)
    cells = locate_points(grid, pts)
    values = {}
    for name, arr in fields.items():
        arr = np.asarray(arr, dtype=float)
        vals = np.full(num, np.nan)
        inside = cells >= 0
        vals[inside] = arr[cells[inside]]
        values[name] = vals
    return LineSample(points=pts, arclength=s, cell=cells, values=values)


def write_csv(path, columns: dict[str, np.ndarray]) -> None:
    """Write named columns as CSV with a header row."""
    names = list(columns)
    arrays = [np.asarray(columns[n]).ravel() for n in names]
    n = arrays[0].size
    for name, arr in zip(names, arrays):
        if arr.size != n:
            raise ValueError(f"column {name!r} has {arr.size} rows, expected {n}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(n):
            writer.writerow(["%.16g" % a[i] for a in arrays])
