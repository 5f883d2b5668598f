import math

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hardylab.assembly import WeightKind, mass, stiffness
from hardylab.cli import RunConfig
from hardylab.closedform import omega_bar, x_weight
from hardylab.geometry import FermiChart, chart_forward, chart_inverse
from hardylab.linalg import cg, dense_gen_eig, min_gen_eig
from hardylab.mesh import TriMesh, signed_areas

FAST = settings(max_examples=40, deadline=None)
coord = st.floats(-3, 3, allow_nan=False)


@FAST
@given(st.sampled_from(["sphere_exterior", "sphere_interior"]),
       st.floats(0, 0.45), st.floats(-1.5, 1.5))
def test_chart_round_trip(kind, rad, ang):
    ch = FermiChart(kind)
    y = np.array([[rad * math.cos(ang), rad * math.sin(ang)]])
    assert np.all(np.abs(chart_inverse(ch, chart_forward(ch, y)) - y) <= 1e-12)


@FAST
@given(st.tuples(coord, coord, coord, coord, coord, coord))
def test_single_triangle_forms(c):
    v = np.array(c, dtype=float).reshape(3, 2)
    area = 0.5 * ((v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1]))
    if abs(area) < 1e-3:
        return
    tri = [[0, 1, 2]] if area > 0 else [[0, 2, 1]]
    m = TriMesh(v, tri, [True] * 3, 0, 0.0, None)
    K = stiffness(m, reduced=False).toarray()
    M = mass(m, reduced=False).toarray()
    assert np.allclose(K.sum(1), 0, atol=1e-9 * max(1, np.abs(K).max()))
    assert math.isclose(M.sum(), abs(area), rel_tol=1e-12)
    assert np.all(signed_areas(m.vertices, m.triangles) > 0)
    assert np.linalg.eigvalsh(K).min() > -1e-9 * np.abs(K).max()


@FAST
@given(arrays(float, 3, elements=st.floats(-5, 5)))
def test_mass_integrates_linear_squares(c):
    # P1 mass is exact for products of linear functions
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    m = TriMesh(v, [[0, 1, 2]], [True] * 3, 0, 0.0, None)
    M = mass(m, reduced=False).toarray()
    a, b, k = c
    u = k + a * v[:, 0] + b * v[:, 1]
    exact = (k * k / 2 + (a * a + b * b) / 12 + k * (a + b) / 3 + a * b / 12)
    assert math.isclose(u @ M @ u, exact, rel_tol=1e-12, abs_tol=1e-12)


@FAST
@given(st.integers(2, 12), st.integers(0, 2 ** 31 - 1))
def test_rayleigh_quotient_bounds_min_eig(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n))
    A = X @ X.T + n * np.eye(n)
    Y = rng.standard_normal((n, n))
    B = Y @ Y.T / n + np.eye(n)
    mu = min_gen_eig(A, B, tol=1e-12).value
    assert math.isclose(mu, dense_gen_eig(A, B)[0], rel_tol=1e-8)
    for _ in range(5):
        z = rng.standard_normal(n)
        assert (z @ A @ z) / (z @ B @ z) >= mu - 1e-9 * abs(mu)


@FAST
@given(st.integers(1, 15), st.integers(0, 2 ** 31 - 1))
def test_cg_solves_spd(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n))
    A = X @ X.T + np.eye(n)
    b = rng.standard_normal(n)
    res = cg(A, b, tol=1e-12)
    assert res.converged
    assert np.linalg.norm(A @ res.x - b) <= 1e-10 * np.linalg.norm(b) * np.linalg.cond(A)


@FAST
@given(st.floats(-0.99, -0.51), st.floats(1e-6, 0.3), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_omega_bar_is_normal_coordinate_times_radial(a, rad, p1, p2):
    y = np.array([[rad * math.cos(p1), rad * math.sin(p1)], [rad * math.cos(p2), rad * math.sin(p2)]])
    w = omega_bar(a, 2, y)
    assert np.all(w >= 0)
    g = w / y[:, 0]
    assert math.isclose(g[0], g[1], rel_tol=1e-12)


@FAST
@given(st.floats(-3, 3), st.floats(1e-3, 0.9))
def test_x_weight_positive(a, t):
    assert x_weight(a, t) > 0


@FAST
@given(st.dictionaries(st.sampled_from(["r", "h", "beta", "refine", "lam"]),
                       st.floats(0.01, 5), min_size=1))
def test_config_key_ignores_insertion_order(params):
    a = RunConfig("mu", dict(params), "out", True, 0)
    b = RunConfig("mu", dict(reversed(list(params.items()))), "out", True, 0)
    assert a.key() == b.key()
    assert RunConfig.from_dict(a.to_dict()) == a


@FAST
@given(st.floats(0.05, 2.0))
def test_inv_r2_weight_scale_invariant_on_triangle(s):
    v = np.array([[0.3, 0.1], [0.7, 0.2], [0.4, 0.6]])
    m1 = TriMesh(v, [[0, 1, 2]], [False] * 3, 0, 0.0, None)
    m2 = TriMesh(s * v, [[0, 1, 2]], [False] * 3, 0, 0.0, None)
    B1 = mass(m1, WeightKind.inv_r2(), reduced=False).toarray()
    B2 = mass(m2, WeightKind.inv_r2(), reduced=False).toarray()
    assert np.allclose(B1, B2, rtol=1e-7)
