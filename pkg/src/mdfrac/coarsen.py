"""Simplex-to-polytope grid coarsening by greedy cell agglomeration.

Small cells are merged into neighbouring cells until every cell's measure
exceeds a threshold. The merge order is deterministic: always take the
smallest cell first and merge it with its smallest face-neighbour, breaking
ties by the lowest cell id. Merged cells become polytopes that remember
their fine simplices, so the coarse grid's measures and centroids are sums
of fine-simplex quantities and coarsening conserves measure exactly.

Faces can be protected (typically the faces lying on a fracture): a merge
across a protected face is never performed, which keeps the interface
geometry — and hence the coupling to the lower-dimensional grid — intact.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional

import numpy as np

from mdfrac.errors import CoarseningError
from mdfrac.mdgrid import DimGrid, build_dim_grid, match_interface_faces

__all__ = [
    "CoarseningReport",
    "coarsen_grid",
    "protect_interface_faces",
]


@dataclass
class CoarseningReport:
    """Summary of one coarsening pass."""

    cells_before: int
    cells_after: int
    merges: int
    threshold: float
    mode: str
    cell_map: np.ndarray  # fine cell id -> coarse cell id

    @property
    def reduction(self) -> float:
        """Fraction of cells removed."""
        if self.cells_before == 0:
            return 0.0
        return 1.0 - self.cells_after / self.cells_before


def protect_interface_faces(high: DimGrid, low: DimGrid, tol: float = 1e-8) -> np.ndarray:
    """Mask of high-grid faces that coincide with cells of the lower grid.

    Meant to be computed *before* coarsening and passed as
    ``protected_faces``, so agglomeration cannot swallow the interface.
    """
    mask = np.zeros(high.num_faces, dtype=bool)
    for fid, _ in match_interface_faces(high, low, tol):
        mask[fid] = True
    return mask


def coarsen_grid(
    grid: DimGrid,
    threshold: float,
    mode: str = "absolute",
    protected_faces: Optional[np.ndarray] = None,
) -> tuple[DimGrid, CoarseningReport]:
    """Agglomerate cells with measure at or below a threshold.

    Parameters:
        grid: a :class:`DimGrid` (before any coupling is attached).
        threshold: measure threshold. With ``mode="absolute"`` it is used
            directly; with ``mode="mean_fraction"`` the effective threshold
            is ``threshold`` times the mean cell measure.
        protected_faces: optional boolean mask over faces; merges across a
            masked face are forbidden.

    Returns:
        The coarse grid and a :class:`CoarseningReport`. Cells that are at
        or below the threshold but have no admissible neighbour (isolated
        by protected faces or the boundary) are left as they are.

    Raises:
        CoarseningError: non-positive threshold or unknown mode.
    """
    if threshold <= 0.0:
        raise CoarseningError(f"threshold must be positive, got {threshold}")
    if mode == "absolute":
        eff = float(threshold)
    elif mode == "mean_fraction":
        eff = float(threshold) * float(grid.cell_measure.mean())
    else:
        raise CoarseningError(f"unknown threshold mode {mode!r}")
    # cells within round-off of the threshold count as mergeable, so that
    # a uniform grid at mean_fraction 1.0 agglomerates instead of stalling
    # on one-ulp differences between its cell measures and their mean
    eff_cmp = eff * (1.0 + 1e-12)
    if grid.dim < 1:
        raise CoarseningError("0d grids cannot be coarsened")
    if protected_faces is None:
        protected_faces = np.zeros(grid.num_faces, dtype=bool)

    n = grid.num_cells
    measure = grid.cell_measure.copy()

    # adjacency over non-protected interior faces
    neighbors: list[set[int]] = [set() for _ in range(n)]
    for fid in range(grid.num_faces):
        inc = grid.face_cells[fid]
        if len(inc) == 2 and not protected_faces[fid]:
            a, b = inc
            neighbors[a].add(b)
            neighbors[b].add(a)

    # union structure: alive group id -> member fine cells
    members: dict[int, list[int]] = {c: [c] for c in range(n)}
    group_of = np.arange(n)
    version = np.zeros(n, dtype=np.int64)
    dead_end: set[int] = set()

    heap: list[tuple[float, int, int]] = [
        (float(measure[c]), c, 0) for c in range(n) if measure[c] <= eff_cmp
    ]
    heapq.heapify(heap)
    merges = 0

    while heap:
        m, g, ver = heapq.heappop(heap)
        if g not in members or ver != version[g] or g in dead_end:
            continue
        if m > eff_cmp:
            break
        cands = neighbors[g]
        if not cands:
            dead_end.add(g)
            continue
        # smallest neighbour, ties to the lowest id
        tgt = min(cands, key=lambda q: (measure[q], q))
        keep, gone = (g, tgt) if g < tgt else (tgt, g)

        members[keep].extend(members[gone])
        del members[gone]
        group_of[group_of == gone] = keep
        measure[keep] = measure[keep] + measure[gone]
        merged_nb = (neighbors[keep] | neighbors[gone]) - {keep, gone}
        neighbors[keep] = merged_nb
        neighbors[gone] = set()
        for q in merged_nb:
            neighbors[q].discard(gone)
            neighbors[q].add(keep)
        version[keep] += 1
        version[gone] += 1
        dead_end.discard(keep)
        merges += 1
        if measure[keep] <= eff_cmp:
            heapq.heappush(heap, (float(measure[keep]), keep, int(version[keep])))

    # deterministic coarse ordering: by smallest member id
    alive = sorted(members, key=lambda g: min(members[g]))
    polys = []
    cell_map = np.empty(n, dtype=int)
    for coarse_id, g in enumerate(alive):
        cells = sorted(members[g])
        for c in cells:
            cell_map[c] = coarse_id
        polys.append(np.vstack([grid.cell_simplices[c] for c in cells]))

    coarse = build_dim_grid(
        grid.node_coords, polys, dim=grid.dim, ambient_dim=grid.ambient_dim
    )
    report = CoarseningReport(
        cells_before=n,
        cells_after=coarse.num_cells,
        merges=merges,
        threshold=eff,
        mode=mode,
        cell_map=cell_map,
    )
    return coarse, report
