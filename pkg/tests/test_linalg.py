import numpy as np
import pytest
import scipy.sparse as sps

from mdfrac.errors import SolverError
from mdfrac.linalg import TripletBuilder, dense_solve, export_matrix, solve_sparse


def test_triplet_builder_sums_duplicates():
    tb = TripletBuilder((3, 3))
    tb.add([0, 1], [0, 1], [1.0, 2.0])
    tb.add(0, 0, 0.5)
    A = tb.tocsr()
    assert A[0, 0] == pytest.approx(1.5)
    assert A[1, 1] == pytest.approx(2.0)
    assert A.nnz == 2


def test_triplet_builder_block():
    tb = TripletBuilder((4, 4))
    block = np.array([[1.0, 2.0], [3.0, 4.0]])
    tb.add_block([2, 0], [1, 3], block)
    A = tb.tocsr().toarray()
    assert A[2, 1] == 1.0 and A[2, 3] == 2.0
    assert A[0, 1] == 3.0 and A[0, 3] == 4.0


def test_triplet_builder_rejects_out_of_range():
    tb = TripletBuilder((2, 2))
    tb.add(5, 0, 1.0)
    with pytest.raises(SolverError):
        tb.tocsr()


def test_direct_solve_known_system():
    A = sps.csr_matrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
    x, rep = solve_sparse(A, np.array([3.0, 5.0]))
    assert x == pytest.approx([0.8, 1.4])
    assert rep.residual < 1e-14
    assert rep.method == "direct"


def test_direct_solve_singular_raises():
    A = sps.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverError):
        solve_sparse(A, np.array([1.0, 2.0]))


def test_minres_symmetric_indefinite():
    # small saddle-point-like system
    A = sps.csr_matrix(np.array([[2.0, 0.0, 1.0], [0.0, 2.0, 1.0], [1.0, 1.0, 0.0]]))
    b = np.array([1.0, 0.0, 0.5])
    x, rep = solve_sparse(A, b, method="minres", tol=1e-12)
    xd, _ = solve_sparse(A, b)
    assert x == pytest.approx(xd, abs=1e-9)
    assert rep.iterations is not None and rep.iterations > 0


def test_zero_rhs_short_circuit():
    A = sps.identity(4, format="csr")
    x, rep = solve_sparse(A, np.zeros(4))
    assert np.all(x == 0.0)
    assert rep.residual == 0.0


def test_dense_solve_hilbert():
    # Hilbert 3x3 has the exact inverse [[9,-36,30],[-36,192,-180],[30,-180,180]]
    H = np.array([[1, 1 / 2, 1 / 3], [1 / 2, 1 / 3, 1 / 4], [1 / 3, 1 / 4, 1 / 5]])
    x, rep = dense_solve(H, np.array([1.0, 0.0, 0.0]))
    assert x == pytest.approx([9.0, -36.0, 30.0], rel=1e-10)
    assert rep.condition_estimate > 100.0


def test_unknown_method():
    A = sps.identity(2, format="csr")
    with pytest.raises(SolverError):
        solve_sparse(A, np.ones(2), method="sor")


def test_export_matrix_roundtrip(tmp_path):
    import scipy.io

    A = sps.csr_matrix(np.array([[0.0, 1.5], [2.5, 0.0]]))
    path = tmp_path / "mat.mtx"
    export_matrix(A, str(path))
    B = scipy.io.mmread(str(path)).tocsr()
    assert (A != B).nnz == 0
