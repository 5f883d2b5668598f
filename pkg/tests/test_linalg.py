import math

import numpy as np
import pytest
from scipy import sparse

from hardylab.assembly import SparseSymMatrix, WeightKind, mass, stiffness
from hardylab.geometry import DomainSpec
from hardylab.linalg import EigenError, cg, cg_solve, dense_gen_eig, min_gen_eig, \
    smallest_dirichlet_eigenvalue
from hardylab.mesh import generate, refine


def _lap1d(n):
    h = 1.0 / (n + 1)
    main = np.full(n, 2.0 / h ** 2)
    off = np.full(n - 1, -1.0 / h ** 2)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr"), h


def test_cg_diagonal_one_step():
    A = np.diag([1.0, 2.0, 4.0])
    res = cg(A, np.array([1.0, 2.0, 4.0]), preconditioner="jacobi")
    np.testing.assert_allclose(res.x, 1.0)
    assert res.iterations == 1 and res.converged


def test_cg_spd_2x2():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    x = cg_solve(A, np.array([1.0, 2.0]), tol=1e-14, preconditioner="none")
    np.testing.assert_allclose(x, [1 / 11, 7 / 11], rtol=1e-12)


def test_cg_zero_rhs():
    res = cg(np.eye(3), np.zeros(3))
    assert np.all(res.x == 0) and res.iterations == 0


def test_cg_rejects_indefinite():
    with pytest.raises(EigenError):
        cg(np.diag([1.0, -1.0]), np.ones(2), preconditioner="none")


def test_cg_maxit_logs_warning(caplog):
    A, _ = _lap1d(200)
    res = cg(A, np.ones(200), maxit=3)
    assert not res.converged
    assert "cg:" in caplog.text


def test_diag_pencil():
    r = min_gen_eig(np.diag([3.0, 1.0, 2.0]), np.eye(3), tol=1e-12)
    assert r.value == pytest.approx(1.0, abs=1e-12)
    assert abs(r.vector[1]) == pytest.approx(1.0, abs=1e-8)


def test_scaled_b_pencil():
    r = min_gen_eig(np.diag([2.0, 6.0]), np.diag([2.0, 1.0]), tol=1e-12)
    assert r.value == pytest.approx(1.0, abs=1e-12)


def test_1d_laplacian_first_eigenvalue():
    n = 199
    A, h = _lap1d(n)
    r = min_gen_eig(A, sparse.identity(n, format="csr"), tol=1e-10)
    assert r.value == pytest.approx(2 / h ** 2 * (1 - math.cos(math.pi * h)), rel=1e-9)


def test_eigenvector_b_normalised():
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    A, B = stiffness(m), mass(m, WeightKind.inv_r2())
    r = min_gen_eig(A, B, tol=1e-10)
    assert float(r.vector @ (B @ r.vector)) == pytest.approx(1.0, abs=1e-12)
    assert r.residual <= 1e-10 and r.converged


def test_matches_dense_oracle_on_mesh_pencil():
    m = generate(DomainSpec("sector", r=0.5, theta=math.pi / 2), 0.1, 2.0)
    A, B = stiffness(m), mass(m, WeightKind.inv_r2())
    assert min_gen_eig(A, B, tol=1e-12).value == pytest.approx(
        dense_gen_eig(A.toarray(), B.toarray())[0], abs=1e-8)


def test_half_disk_dirichlet_eigenvalue_from_above():
    # j_{1,1}^2 = 14.6819... on the unit half disk
    exact = 14.681970642123893
    m = generate(DomainSpec("half_disk", r=1.0), 0.1, 0.0)
    vals = []
    for _ in range(2):
        vals.append(smallest_dirichlet_eigenvalue(m, tol=1e-10).value)
        m = refine(m)
    assert all(v > exact for v in vals)
    assert vals[1] < vals[0]
    assert vals[1] == pytest.approx(exact, rel=5e-3)


def test_warm_start_needs_fewer_iterations():
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    A, B = stiffness(m), mass(m, WeightKind.inv_r2())
    cold = min_gen_eig(A, B, tol=1e-10)
    warm = min_gen_eig(A, B, tol=1e-10, x0=cold.vector)
    assert warm.iterations <= 1
    assert warm.value == pytest.approx(cold.value, rel=1e-12)


def test_eigensolver_deterministic():
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    A, B = stiffness(m), mass(m, WeightKind.inv_r2())
    a, b = min_gen_eig(A, B), min_gen_eig(A, B)
    assert a.value == b.value
    assert a.vector.tobytes() == b.vector.tobytes()


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        min_gen_eig(np.eye(3), np.eye(2))


def test_dense_oracle_rejects_indefinite_b():
    with pytest.raises(EigenError):
        dense_gen_eig(np.eye(2), np.diag([1.0, -1.0]))


def test_accepts_sparse_sym_matrix():
    A, _ = _lap1d(20)
    r = min_gen_eig(SparseSymMatrix(A), SparseSymMatrix(sparse.identity(20, format="csr")))
    assert r.converged
