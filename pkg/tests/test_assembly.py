import math

import numpy as np
import pytest
from scipy import integrate

from hardylab.assembly import (AssemblyError, SparseSymMatrix, WeightKind, element_mass, mass,
                               stiffness, triangle_quadrature)
from hardylab.geometry import DomainSpec, FermiChart
from hardylab.mesh import TriMesh, generate, refine

TRI = generate(DomainSpec("polygon", vertices=((0, 0), (1, 0), (0, 1))), 1.0)


def _shifted_triangle(offset):
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]) + offset
    return TriMesh(v, [[0, 1, 2]], [False, False, False], 0, 0.0, None)


@pytest.mark.parametrize("order", [2, 4, 7])
def test_quadrature_exact_on_monomials(order):
    pts, w = triangle_quadrature(order)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    for i in range(order + 1):
        for j in range(order + 1 - i):
            exact = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
            assert 0.5 * np.sum(w * pts[:, 1] ** i * pts[:, 2] ** j) == pytest.approx(exact, abs=1e-15)


def test_quadrature_rejects_unknown_order():
    with pytest.raises(AssemblyError):
        triangle_quadrature(3)


def test_unit_triangle_stiffness_and_mass():
    K = stiffness(TRI, reduced=False).toarray()
    np.testing.assert_allclose(K, [[1, -.5, -.5], [-.5, .5, 0], [-.5, 0, .5]], atol=1e-15)
    M = mass(TRI, reduced=False).toarray()
    np.testing.assert_allclose(M, (np.ones((3, 3)) + np.eye(3)) / 24, atol=1e-16)


def test_stiffness_linear_in_coefficient():
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    K1 = stiffness(m).toarray()
    K2 = stiffness(m, p=lambda x: np.full(x.shape[:-1], 2.0)).toarray()
    np.testing.assert_allclose(K2, 2 * K1, rtol=1e-14, atol=1e-14)


def test_structured_square_gives_five_point_row():
    sq = refine(refine(generate(DomainSpec("polygon",
                                           vertices=((0, 0), (1, 0), (1, 1), (0, 1))), 1.0)))
    K = stiffness(sq, reduced=False).toarray()
    c = int(np.flatnonzero(np.all(np.isclose(sq.vertices, 0.5), axis=1))[0])
    row = K[c]
    assert row[c] == pytest.approx(4.0)
    nbrs = np.flatnonzero(np.abs(row) > 1e-12)
    assert sorted(np.round(row[nbrs], 12)) == [-1.0] * 4 + [4.0]


def test_inv_r2_matches_reference_quadrature():
    m = _shifted_triangle([0.3, 0.2])
    got = mass(m, WeightKind.inv_r2(), reduced=False).toarray()
    v = m.vertices

    def entry(i, j):
        def f(t, s):
            lam = np.array([1 - s - t, s, t])
            x = v[0] * lam[0] + v[1] * lam[1] + v[2] * lam[2]
            return lam[i] * lam[j] / (x @ x)
        return integrate.dblquad(f, 0, 1, 0, lambda s: 1 - s, epsabs=1e-13, epsrel=1e-12)[0]
    # vertex 0 is flagged as the origin, so its basis function is dropped
    ref = np.array([[entry(i, j) for j in (1, 2)] for i in (1, 2)])
    np.testing.assert_allclose(got[1:, 1:], ref, rtol=1e-8)
    assert np.all(got[0] == 0.0)


def test_inv_r2_mass_integrates_log_divergence_on_graded_mesh():
    # int_{floor<|x|<r} |x|^-2 phi_i summed is finite; the origin basis function is dropped
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    B = mass(m, WeightKind.inv_r2(), reduced=False)
    assert np.all(np.isfinite(B.toarray()))
    assert np.all(B.toarray()[m.origin_id] == 0.0)


def test_weighted_field_reduces_to_plain():
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    B = mass(m, WeightKind.inv_r2()).toarray()
    Bw = mass(m, WeightKind.field(lambda x: np.ones(x.shape[:-1]), "inv_r2")).toarray()
    np.testing.assert_allclose(Bw, B, rtol=1e-12, atol=1e-12)


def test_inv_r2_log2_needs_unit_ball():
    m = generate(DomainSpec("half_disk", r=1.5), 0.3, 0.0)
    with pytest.raises(AssemblyError):
        mass(m, WeightKind.inv_r2_log2())


def test_inv_dist_masks_boundary_and_is_positive():
    ch = FermiChart("plane")
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    M = mass(m, WeightKind.inv_dist(ch)).toarray()
    assert np.all(np.isfinite(M))
    assert np.all(np.linalg.eigvalsh(M) > 0)


def test_non_positive_coefficient_rejected():
    with pytest.raises(AssemblyError):
        stiffness(TRI, p=lambda x: x[..., 0] - 0.5)


def test_matrices_symmetric_and_positive_definite():
    m = generate(DomainSpec("sector", r=0.5, theta=1.5 * math.pi), 0.1, 2.0)
    for A in (stiffness(m), mass(m), mass(m, WeightKind.inv_r2())):
        assert A.asymmetry() < 1e-14
        assert np.linalg.eigvalsh(A.toarray()).min() > 0


def test_adaptive_quadrature_tightens():
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    loose = element_mass(m, WeightKind.inv_r2(), tol=1e-4)
    tight = element_mass(m, WeightKind.inv_r2(), tol=1e-10)
    tighter = element_mass(m, WeightKind.inv_r2(), tol=1e-12)
    assert np.abs(tight - tighter).max() <= np.abs(loose - tighter).max()


def test_dump_load_round_trip(tmp_path):
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    B = mass(m, WeightKind.inv_r2())
    B.dump(tmp_path / "b.mtx")
    back = SparseSymMatrix.load(tmp_path / "b.mtx")
    np.testing.assert_array_equal(back.toarray(), B.toarray())


def test_assembly_bit_identical():
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    a = mass(m, WeightKind.inv_r2()).values.tobytes()
    assert a == mass(m, WeightKind.inv_r2()).values.tobytes()
