"""Sparse-matrix assembly helpers and linear solvers.

Thin layer over scipy.sparse tailored to what the discretizations need:
triplet accumulation, direct and iterative solves with a common interface,
and MatrixMarket export for offline inspection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from mdfrac.errors import SolverError

__all__ = [
    "TripletBuilder",
    "SolveReport",
    "solve_sparse",
    "dense_solve",
    "export_matrix",
]


class TripletBuilder:
    """Accumulate (row, col, value) triplets and convert to CSR.

    Duplicate entries are summed on conversion, so local element matrices
    can be scattered without precomputing the sparsity pattern.
    """

    def __init__(self, shape: tuple[int, int]):
        self.shape = shape
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, rows, cols, values) -> None:
        """Append entries; scalars broadcast against index arrays."""
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        values = np.broadcast_to(
            np.asarray(values, dtype=float), np.broadcast_shapes(rows.shape, cols.shape)
        )
        rows, cols = np.broadcast_arrays(rows, cols)
        self._rows.append(rows.ravel())
        self._cols.append(cols.ravel())
        self._vals.append(np.asarray(values).ravel())

    def add_block(self, rows, cols, block) -> None:
        """Scatter a dense local block: entry (i, j) goes to (rows[i], cols[j])."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        block = np.asarray(block, dtype=float)
        r = np.repeat(rows, cols.size)
        c = np.tile(cols, rows.size)
        self._rows.append(r)
        self._cols.append(c)
        self._vals.append(block.ravel())

    @property
    def nnz_triplets(self) -> int:
        return int(sum(v.size for v in self._vals))

    def tocsr(self) -> sps.csr_matrix:
        if not self._vals:
            return sps.csr_matrix(self.shape)
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        vals = np.concatenate(self._vals)
        if rows.size and (rows.min() < 0 or rows.max() >= self.shape[0]):
            raise SolverError("row index out of range in triplet assembly")
        if cols.size and (cols.min() < 0 or cols.max() >= self.shape[1]):
            raise SolverError("column index out of range in triplet assembly")
        mat = sps.coo_matrix((vals, (rows, cols)), shape=self.shape)
        return mat.tocsr()


@dataclass
class SolveReport:
    """What the linear solve did and how well it went."""

    method: str
    size: int
    residual: float
    iterations: Optional[int] = None
    condition_estimate: Optional[float] = None

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        bits = [f"{self.method} n={self.size} resid={self.residual:.3e}"]
        if self.iterations is not None:
            bits.append(f"iters={self.iterations}")
        if self.condition_estimate is not None:
            bits.append(f"cond~{self.condition_estimate:.2e}")
        return " ".join(bits)


def solve_sparse(
    A: sps.spmatrix,
    b: np.ndarray,
    method: str = "direct",
    tol: float = 1e-10,
    maxiter: Optional[int] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = b``.

    ``method="direct"`` uses a sparse LU factorization; ``method="minres"``
    runs MINRES (the saddle-point systems are symmetric indefinite). The
    report carries the relative residual actually achieved.

    Raises:
        SolverError: singular matrix or iterative breakdown past ``tol``.
    """
    b = np.asarray(b, dtype=float).ravel()
    n = b.size
    if A.shape != (n, n):
        raise SolverError(f"shape mismatch: A is {A.shape}, b has {n} entries")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(method=method, size=n, residual=0.0)

    if method == "direct":
        try:
            lu = spla.splu(A.tocsc())
            x = lu.solve(b)
        except RuntimeError as exc:
            raise SolverError(f"direct solve failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise SolverError("direct solve produced non-finite entries")
        resid = np.linalg.norm(A @ x - b) / bnorm
        if resid > max(1e-6, tol * 1e4):
            raise SolverError(
                f"direct solve residual {resid:.3e} indicates a (nearly) "
                "singular system"
            )
        return x, SolveReport(method="direct", size=n, residual=float(resid))

    if method == "minres":
        if maxiter is None:
            maxiter = max(1000, 20 * n)
        count = {"it": 0}

        def cb(_):
            count["it"] += 1

        x, info = spla.minres(A, b, rtol=tol, maxiter=maxiter, callback=cb)
        resid = np.linalg.norm(A @ x - b) / bnorm
        if info != 0 or resid > tol * 1e3:
            raise SolverError(
                f"minres did not converge (info={info}, residual={resid:.3e})"
            )
        return x, SolveReport(
            method="minres", size=n, residual=float(resid), iterations=count["it"]
        )

    raise SolverError(f"unknown solver method {method!r}")


def dense_solve(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, SolveReport]:
    """Dense solve for small local systems, with a condition estimate."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    cond = float(np.linalg.cond(A))
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"dense solve failed: {exc}") from exc
    bnorm = np.linalg.norm(b)
    resid = float(np.linalg.norm(A @ x - b) / bnorm) if bnorm > 0 else 0.0
    return x, SolveReport(
        method="dense", size=b.shape[0], residual=resid, condition_estimate=cond
    )


def export_matrix(A: sps.spmatrix, path: str, comment: str = "") -> None:
    """Write a matrix in MatrixMarket coordinate format."""
    import scipy.io

    scipy.io.mmwrite(path, A.tocoo(), comment=comment)
