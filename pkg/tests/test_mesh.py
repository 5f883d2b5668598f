import math

import numpy as np
import pytest

from hardylab.geometry import DomainSpec, FermiChart, distance_to_surface
from hardylab.mesh import (MeshError, TriMesh, boundary_edges, check_invariants, corner_angle,
                           generate, inside_closed_domain, mesh_quality, prolongation, refine,
                           signed_areas)

HALF = DomainSpec("half_disk", r=0.5)
DOMAINS = [
    HALF,
    DomainSpec("sector", r=0.5, theta=math.pi / 2),
    DomainSpec("sector", r=0.5, theta=1.5 * math.pi),
    DomainSpec("fermi_half_ball", r=0.1, chart=FermiChart("sphere_exterior")),
    DomainSpec("fermi_half_ball", r=0.1, chart=FermiChart("sphere_interior")),
    DomainSpec("exterior_cap", r=0.8, hole_radius=1.0),
]


def _limit(dom, mesh):
    if dom.kind == "exterior_cap":
        return min(20.0, 0.7 * corner_angle(dom, mesh.meta.get("r_meshed")))
    return 20.0


def test_half_disk_uniform_golden():
    m = generate(HALF, 0.1, 0.0)
    assert (m.n_vertices, m.n_triangles) == (110, 182)
    assert m.fingerprint() == "8ce5c8014b18daaf"
    assert check_invariants(m) == []


@pytest.mark.parametrize("dom", DOMAINS, ids=lambda d: d.kind + str(round(d.theta, 2)))
@pytest.mark.parametrize("beta", [0.0, 2.0])
def test_generated_meshes_satisfy_invariants(dom, beta):
    h = dom.diameter / 10 if dom.kind != "exterior_cap" else 0.1
    m = generate(dom, h, beta)
    assert check_invariants(m, min_angle=_limit(dom, m)) == []
    m2 = refine(m)
    assert check_invariants(m2, min_angle=_limit(dom, m2)) == []


def test_origin_vertex_is_dirichlet_and_exact():
    for dom in DOMAINS:
        m = generate(dom, dom.diameter / 10 if dom.kind != "exterior_cap" else 0.1, 2.0)
        assert np.linalg.norm(m.vertices[m.origin_id]) < 1e-14
        assert m.dirichlet_mask[m.origin_id]


def test_boundary_edges_are_dirichlet():
    m = refine(refine(generate(HALF, 0.1, 2.0)))
    be = boundary_edges(m.triangles)
    assert np.all(m.dirichlet_mask[be])


def test_grading_law_near_origin():
    m = generate(DomainSpec("sector", r=0.5, theta=math.pi / 2), 0.05, 2.0)
    adj = np.any(m.triangles == m.origin_id, axis=1)
    p = m.vertices[m.triangles[adj]]
    longest = np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2).max()
    assert longest <= 0.05 * (0.05 / 0.5) ** (2 / 3) * (1 + 1e-9)


def test_polygon_single_triangle():
    m = generate(DomainSpec("polygon", vertices=((0, 0), (1, 0), (0, 1))), 1.0)
    assert m.n_triangles == 1
    assert mesh_quality(m)["min_angle"] == pytest.approx(45.0)


def test_refine_unit_square_counts():
    sq = generate(DomainSpec("polygon", vertices=((0, 0), (1, 0), (1, 1), (0, 1))), 1.0)
    assert sq.n_triangles == 2
    r = refine(sq)
    assert (r.n_triangles, r.n_vertices) == (8, 9)
    # every new boundary midpoint is masked, the centre is not
    centre = np.flatnonzero(np.all(np.isclose(r.vertices, 0.5), axis=1))
    assert list(np.flatnonzero(~r.dirichlet_mask)) == list(centre)


def test_refine_preserves_min_angle_straight_sided():
    sq = generate(DomainSpec("polygon", vertices=((0, 0), (2, 0), (1.5, 1.2), (0.2, 0.9))), 0.5)
    a0 = mesh_quality(sq)["min_angle"]
    assert mesh_quality(refine(sq))["min_angle"] == pytest.approx(a0, abs=1e-9)


def test_refine_reprojects_arc():
    m = refine(refine(generate(HALF, 0.1, 2.0)))
    rho = np.linalg.norm(m.vertices, axis=1)
    on_arc = m.dirichlet_mask & (m.vertices[:, 0] > 1e-12)
    assert np.all(np.abs(rho[on_arc] - 0.5) < 1e-10)


def test_area_converges_second_order():
    exact = math.pi * 0.25 / 2
    m = generate(HALF, 0.1, 0.0)
    errs = []
    for _ in range(3):
        errs.append(abs(mesh_quality(m)["area"] - exact))
        m = refine(m)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_fermi_vertices_inside_surface():
    ch = FermiChart("sphere_exterior")
    m = refine(generate(DomainSpec("fermi_half_ball", r=0.1, chart=ch), 0.01, 2.0, floor=1e-12))
    assert np.all(distance_to_surface(ch, m.vertices) >= -1e-12)


def test_vertices_in_closed_domain():
    for dom in DOMAINS:
        m = refine(generate(dom, dom.diameter / 10 if dom.kind != "exterior_cap" else 0.1, 2.0))
        assert np.all(inside_closed_domain(dom, m.vertices, m.meta.get("r_meshed")))


def test_all_areas_positive_deep_floor():
    m = generate(HALF, 0.1, 2.0, floor=1e-30)
    assert np.all(signed_areas(m.vertices, m.triangles) > 0)
    assert np.min(np.linalg.norm(np.delete(m.vertices, m.origin_id, 0), axis=1)) <= 1e-29


def test_generate_rejects_bad_parameters():
    with pytest.raises(MeshError):
        generate(HALF, 0.3, 0.0)
    with pytest.raises(MeshError):
        generate(HALF, 0.1, -1.0)
    with pytest.raises(MeshError):
        generate(HALF, 0.1, 2.0, floor=1e-200)
    with pytest.raises(MeshError):
        generate(DomainSpec("polygon", vertices=((0.1, 0), (1, 0), (0, 1))), 0.5)


def test_prolongation_reproduces_linear_functions():
    m = generate(HALF, 0.1, 2.0)
    f = refine(m)
    P = prolongation(m, f)
    lin = lambda v: 2 * v[:, 0] - 3 * v[:, 1] + 1
    # interior midpoints are exact; reprojected arc midpoints move by O(h^2)
    err = np.abs(P @ lin(m.vertices) - lin(f.vertices))
    assert np.max(err[~f.dirichlet_mask]) < 1e-12


def test_json_round_trip():
    m = refine(generate(DomainSpec("fermi_half_ball", r=0.1, chart=FermiChart("sphere_exterior")),
                        0.01, 2.0))
    back = TriMesh.from_json(m.to_json())
    assert back.fingerprint() == m.fingerprint()
    np.testing.assert_array_equal(back.dirichlet_mask, m.dirichlet_mask)
    np.testing.assert_array_equal(back.ref, m.ref)
    assert back.parent_domain == m.parent_domain


def test_mesh_generation_deterministic():
    a = generate(DomainSpec("exterior_cap", r=2.0), 0.1, 1.0, floor=1e-12)
    b = generate(DomainSpec("exterior_cap", r=2.0), 0.1, 1.0, floor=1e-12)
    assert a.fingerprint() == b.fingerprint()
