"""Graded triangulations with the singular point (the origin) as a boundary vertex.

Local element size follows::

    s(rho) = h * (max(rho, floor) / L)^(beta / (1 + beta))

with ``L`` the domain diameter (the hole radius for exterior caps).  Sectors,
half disks and chart half balls are built from rings of nodes centred at the
origin, marched outward in log radius so cells stay near-square in log-polar
coordinates; the origin is joined to the innermost ring (radius ``floor``) by
a fan.  Exterior caps use the same graded ring nodes plus nodes on the hole
circle, triangulated by Delaunay.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import DomainSpec, chart_forward, chart_inverse

ON_CURVE_RTOL = 1e-9


class MeshError(ValueError):
    pass


@dataclass
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    dirichlet_mask: np.ndarray
    origin_id: int
    grading_beta: float
    parent_domain: Optional[DomainSpec]
    ref: Optional[np.ndarray] = None
    level: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.dirichlet_mask = np.asarray(self.dirichlet_mask, dtype=bool)
        if self.ref is None:
            self.ref = self.vertices.copy()

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def free(self) -> np.ndarray:
        """Indices of the interior (non-Dirichlet) vertices, in reduced numbering order."""
        return np.flatnonzero(~self.dirichlet_mask)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.triangles).tobytes())
        return h.hexdigest()[:16]

    def to_json(self) -> str:
        doc = {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "dirichlet_mask": self.dirichlet_mask.astype(int).tolist(),
            "origin_id": int(self.origin_id),
            "grading_beta": self.grading_beta if math.isfinite(self.grading_beta) else "inf",
            "level": self.level,
            "domain": None if self.parent_domain is None else self.parent_domain.to_dict(),
            "ref": self.ref.tolist(),
            "meta": self.meta,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "TriMesh":
        doc = json.loads(text)
        beta = doc["grading_beta"]
        return cls(vertices=np.array(doc["vertices"]), triangles=np.array(doc["triangles"]),
                   dirichlet_mask=np.array(doc["dirichlet_mask"], dtype=bool),
                   origin_id=doc["origin_id"],
                   grading_beta=math.inf if beta == "inf" else float(beta),
                   parent_domain=None if doc["domain"] is None else DomainSpec.from_dict(doc["domain"]),
                   ref=np.array(doc["ref"]), level=doc.get("level", 0), meta=doc.get("meta", {}))


# ---------------------------------------------------------------------------
# topology helpers

def _edges(tris):
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    return np.sort(e, axis=1)


def boundary_edges(tris: np.ndarray) -> np.ndarray:
    e = _edges(tris)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return uniq[counts == 1]


def _boundary_mask(n, tris):
    mask = np.zeros(n, dtype=bool)
    mask[boundary_edges(tris).ravel()] = True
    return mask


def signed_areas(vertices, tris):
    p = vertices[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def triangle_angles(vertices, tris) -> np.ndarray:
    """Interior angles in degrees, shape (m, 3)."""
    p = vertices[tris]
    out = np.empty((len(tris), 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        out[:, k] = np.degrees(np.arctan2(cross, np.sum(u * v, axis=1)))
    return out


def _min_angle(pts):
    (ax, ay), (bx, by), (cx, cy) = pts
    la = math.hypot(bx - cx, by - cy)
    lb = math.hypot(ax - cx, ay - cy)
    lc = math.hypot(ax - bx, ay - by)
    area2 = abs((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))
    # smallest angle sits opposite the shortest edge
    lo = min(la, lb, lc)
    others = sorted((la, lb, lc))[1:]
    return math.degrees(math.asin(min(1.0, area2 / (others[0] * others[1])))) if lo > 0 else 0.0


# ---------------------------------------------------------------------------
# ring construction

def _size_fn(h, beta, floor, L):
    gamma = 1.0 if math.isinf(beta) else beta / (1.0 + beta)

    def s(rho):
        return h * (max(rho, floor) / L) ** gamma

    return s


def _nmin(span, cap=math.pi / 4):
    # segments never open wider than ``cap``
    return max(1, int(math.ceil(span / cap - 1e-9)))


def _ring_schedule(span_len, r, size, floor, band=None):
    """Ring radii and angular segment counts, marching outward in log radius.

    The angular cell size ``span/n`` tracks ``size(rho)/rho`` but may change by
    at most a factor two between neighbouring rings; the log-radial step equals
    the angular cell size (capped at log 2), so cells are near-square in
    log-polar coordinates.
    """
    t, t_end = math.log(floor), math.log(r)
    rings = []
    cell = None
    while True:
        rho = math.exp(t)
        span = span_len(rho)
        target = max(_nmin(span, math.pi / 8), int(math.ceil(span * rho / size(rho) - 1e-9)))
        if cell is None:
            n = _nmin(span)
        else:
            lo = int(math.ceil(span / (2 * cell) - 1e-9))
            hi = max(lo, int(math.floor(2 * span / cell + 1e-9)))
            n = min(max(target, lo, _nmin(span)), hi)
        cell = span / n
        dt = min(cell, math.log(2))
        rings.append([t, n, dt])
        if t + dt >= t_end - 1e-12:
            break
        t += dt
    last = rings[-1]
    if t_end - last[0] > 0.5 * last[2] or len(rings) == 1:
        rings.append([t_end, last[1], last[2]])
    else:
        last[0] = t_end
    out = [(math.exp(tt), n) for tt, n, _ in rings]
    out[-1] = (r, out[-1][1])
    if band is not None:
        lo, hi = band
        out = [(rho, n) for rho, n in out if rho <= lo or rho >= hi]
    return out


def _chain_angles(chain, start):
    pts = np.array([p for _, p in chain])
    ang = np.unwrap(np.arctan2(pts[:, 1], pts[:, 0]))
    return ang + 2 * math.pi * np.round((start - ang[0]) / (2 * math.pi))


def _stitch(inner, outer, closed=False):
    """Triangulate the strip between two node chains ordered by angle.

    ``inner``/``outer`` are lists of (vertex id, point).  For closed chains the
    first node is repeated implicitly at the end.  The chain whose next node
    comes first in angle advances; near ties are broken by the larger minimum
    angle.
    """
    a_in = _chain_angles(inner, 0.0)
    a_out = _chain_angles(outer, a_in[0])
    if closed:
        inner = inner + [inner[0]]
        outer = outer + [outer[0]]
        a_in = np.append(a_in, a_in[0] + 2 * math.pi)
        a_out = np.append(a_out, a_out[0] + 2 * math.pi)
    tris = []
    i = j = 0
    m, n = len(inner) - 1, len(outer) - 1
    while i < m or j < n:
        step_i = ("i", (inner[i], outer[j], inner[i + 1])) if i < m else None
        step_j = ("j", (inner[i], outer[j], outer[j + 1])) if j < n else None
        if step_i is None or step_j is None:
            choice = step_i or step_j
        else:
            di, dj = a_in[i + 1] - a_in[i], a_out[j + 1] - a_out[j]
            gap = a_in[i + 1] - a_out[j + 1]
            if abs(gap) > 0.25 * min(di, dj):
                choice = step_i if gap < 0 else step_j
            else:
                choice = max((step_i, step_j),
                             key=lambda c: _min_angle([c[1][0][1], c[1][1][1], c[1][2][1]]))
        tris.append(tuple(v for v, _ in choice[1]))
        if choice[0] == "i":
            i += 1
        else:
            j += 1
    return tris


class _Builder:
    def __init__(self):
        self.pts = [(0.0, 0.0)]
        self.tris = []

    def add(self, p):
        self.pts.append((float(p[0]), float(p[1])))
        return len(self.pts) - 1

    def ring(self, rho, angles):
        out = []
        for a in angles:
            c, s = math.cos(a), math.sin(a)
            # keep nodes on the straight edges exactly on their lines
            c = 0.0 if abs(c) < 1e-14 else c
            s = 0.0 if abs(s) < 1e-14 else s
            p = np.array([rho * c, rho * s])
            out.append((self.add(p), p))
        return out


def _polar_mesh(span, r, size, floor):
    """Ring mesh of the sector ``{0 < rho < r, span[0] < angle < span[1]}``."""
    lo, hi = span
    rings = _ring_schedule(lambda rho: hi - lo, r, size, floor)
    b = _Builder()
    prev = None
    for rho, n in rings:
        cur = b.ring(rho, lo + (hi - lo) * np.arange(n + 1) / n)
        if prev is None:
            for j in range(n):
                b.tris.append((0, cur[j][0], cur[j + 1][0]))
        else:
            b.tris += _stitch(prev, cur)
        prev = cur
    pts = np.array(b.pts)
    tris = np.array(b.tris, dtype=np.int64)
    area = signed_areas(pts, tris)
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return pts, tris, float(rings[-1][0])


def _exterior_cap_mesh(r, R, size, floor):
    """Delaunay triangulation of graded ring nodes outside a disk tangent at 0.

    Ring nodes closer than half the local spacing to the hole circle are
    dropped and the hole circle gets its own nodes at the local spacing.
    """
    from scipy.spatial import Delaunay

    c = np.array([-R, 0.0])
    law = size

    def size(rho):
        # resolve the hole curvature, then coarsen linearly away from it
        return min(law(rho), R * math.pi / 10 + 0.5 * max(0.0, rho - 2 * R))

    def span_len(rho):
        return 2 * math.pi if rho >= 2 * R else 2 * math.acos(-rho / (2 * R))

    pinch = 2 * R
    tau = 0.5 * size(pinch)
    if pinch - tau < r < pinch + tau:
        # outer circle too close to the tangency: snap to the nearer band edge
        r = pinch - tau if r < pinch else pinch + tau
    rings = _ring_schedule(span_len, r, size, floor)
    radii = np.array([rho for rho, _ in rings])
    cells = np.array([span_len(rho) / n for rho, n in rings])

    def spacing(rho):
        return np.interp(rho, radii, radii * cells)

    pts = [np.zeros((1, 2))]
    for rho, n in rings:
        if rho >= 2 * R:
            ang = math.pi + 2 * math.pi * np.arange(n) / n
        else:
            al = math.acos(-rho / (2 * R))
            ang = -al + 2 * al * np.arange(n + 1) / n
        p = rho * np.stack([np.cos(ang), np.sin(ang)], 1)
        gap = np.linalg.norm(p - c, axis=1) - R
        keep = gap > 0.5 * spacing(rho)
        if rho == r:
            keep |= gap > 1e-12 * R
        pts.append(p[keep])
    # hole nodes, marching along the circle from the origin in both directions
    half = math.pi if r >= 2 * R else 2 * math.acos(-r / (2 * R)) - math.pi
    ts = []
    t = 0.0
    while True:
        rho = 2 * R * math.sin(t / 2)
        # curvature cap keeps boundary reprojection on refinement mild
        t += min(spacing(max(rho, radii[0])) / R, math.pi / 10)
        if t >= half - 1e-9:
            break
        ts.append(t)
    ts = np.array(ts)
    if len(ts):
        # spread the last gap evenly so the end node is not crowded
        ts = ts * (half / (ts[-1] + (ts[-1] - ts[-2] if len(ts) > 1 else ts[-1])))
    for sign in (1.0, -1.0):
        bt = sign * ts
        pts.append(np.stack([c[0] + R * np.cos(bt), R * np.sin(bt)], 1))
    if r >= 2 * R:
        pts.append(np.array([[-2 * R, 0.0]]))
    P = np.vstack(pts)
    P = P[np.linalg.norm(P, axis=1) <= r * (1 + 1e-12)]
    tri = Delaunay(P, qhull_options="Qbb Qc Qz Q12")
    T = tri.simplices.astype(np.int64)
    cent = P[T].mean(axis=1)
    inside = (np.linalg.norm(cent - c, axis=1) > R) & (np.linalg.norm(cent, axis=1) < r)
    T = T[inside & (np.abs(signed_areas(P, T)) > 1e-14 * r * r)]
    used = np.unique(T)
    remap = -np.ones(len(P), dtype=np.int64)
    remap[used] = np.arange(len(used))
    P, T = P[used], remap[T]
    flip = signed_areas(P, T) < 0
    T[flip] = T[flip][:, [0, 2, 1]]
    origin = int(np.argmin(np.linalg.norm(P, axis=1)))
    return P, T, origin, r


def _ear_clip(poly):
    idx = list(range(len(poly)))
    tris = []

    def inside(p, a, b_, c):
        d1 = (b_ - a)[0] * (p - a)[1] - (b_ - a)[1] * (p - a)[0]
        d2 = (c - b_)[0] * (p - b_)[1] - (c - b_)[1] * (p - b_)[0]
        d3 = (a - c)[0] * (p - c)[1] - (a - c)[1] * (p - c)[0]
        return d1 >= 0 and d2 >= 0 and d3 >= 0

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(poly) ** 2:
            raise MeshError("polygon is not simple")
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b_, c = poly[i0], poly[i1], poly[i2]
            cross = (b_ - a)[0] * (c - a)[1] - (b_ - a)[1] * (c - a)[0]
            if cross <= 0:
                continue
            if any(inside(poly[j], a, b_, c) for j in idx if j not in (i0, i1, i2)):
                continue
            tris.append((i0, i1, i2))
            idx.pop(k)
            break
    tris.append(tuple(idx))
    return np.array(tris, dtype=np.int64)


def generate(domain: DomainSpec, h: float, beta: float = 0.0,
             floor: Optional[float] = None) -> TriMesh:
    """Graded triangulation of ``domain`` with target edge length ``h``.

    ``floor`` is the radius of the innermost ring; the default ``h**2`` is
    clipped to an eighth of the radius (and of the hole radius).  Deep
    geometric grading toward the origin takes an explicit small ``floor``;
    ``beta=math.inf`` makes the size proportional to ``|x|`` everywhere.
    """
    if not h > 0:
        raise MeshError("h must be positive")
    if beta < 0:
        raise MeshError("beta must be >= 0")
    if domain.kind == "polygon":
        return _polygon_mesh(domain, h, beta)
    if h >= domain.diameter / 4:
        raise MeshError("h must be smaller than a quarter of the domain diameter")
    r = domain.r
    L = domain.hole_radius if domain.kind == "exterior_cap" else domain.diameter
    floor = min(h * h, r / 8, L / 8) if floor is None else float(floor)
    # |x|^-2 overflows below ~1e-154
    if not floor > 1e-150:
        raise MeshError("grading floor collides with machine precision")
    if floor >= r / 2:
        raise MeshError("grading floor must be well inside the domain")
    size = _size_fn(h, beta, floor, L)
    origin = 0
    if domain.kind == "exterior_cap":
        pts, tris, origin, r_used = _exterior_cap_mesh(r, domain.hole_radius, size, floor)
    else:
        span = (0.0, domain.theta) if domain.kind == "sector" else (-math.pi / 2, math.pi / 2)
        pts, tris, r_used = _polar_mesh(span, r, size, floor)
    ref = pts.copy()
    if domain.kind == "fermi_half_ball":
        pts = chart_forward(domain.chart, ref)
    mask = _boundary_mask(len(pts), tris)
    meta = {"h": h, "floor": floor, "r_meshed": r_used}
    return TriMesh(pts, tris, mask, origin, beta, domain, ref=ref, meta=meta)


def _polygon_mesh(domain, h, beta):
    if beta != 0:
        raise MeshError("graded polygon meshes are not supported (beta must be 0)")
    poly = np.asarray(domain.vertices, dtype=float)
    area = 0.5 * np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    if area < 0:
        poly = poly[::-1]
    hits = np.flatnonzero(np.linalg.norm(poly, axis=1) < 1e-14)
    if len(hits) != 1:
        raise MeshError("the polygon must have the origin as a vertex")
    tris = _ear_clip(poly)
    mesh = TriMesh(poly, tris, np.ones(len(poly), dtype=bool), int(hits[0]), 0.0, domain,
                   meta={"h": h})
    # h is the leg length of a right isosceles element: refine while edges exceed h*sqrt(2)
    while mesh_quality(mesh)["h_max"] > h * math.sqrt(2) * (1 + 1e-12):
        mesh = refine(mesh)
    mesh.level = 0
    return mesh


# ---------------------------------------------------------------------------
# refinement

def _project_boundary(mesh: TriMesh, ref_mid, ref_a, ref_b):
    """Snap boundary-edge midpoints (reference coordinates) onto curved boundary pieces."""
    dom = mesh.parent_domain
    out = ref_mid.copy()
    if dom is None or dom.kind == "polygon":
        return out
    r_outer = mesh.meta.get("r_meshed", dom.r)
    ra = np.linalg.norm(ref_a, axis=1)
    rb = np.linalg.norm(ref_b, axis=1)
    on_outer = (np.abs(ra - r_outer) < ON_CURVE_RTOL * r_outer) & \
               (np.abs(rb - r_outer) < ON_CURVE_RTOL * r_outer)
    nm = np.linalg.norm(out, axis=1)
    out[on_outer] *= (r_outer / nm[on_outer])[:, None]
    if dom.kind == "exterior_cap":
        c = np.array([-dom.hole_radius, 0.0])
        R = dom.hole_radius
        da = np.abs(np.linalg.norm(ref_a - c, axis=1) - R)
        db = np.abs(np.linalg.norm(ref_b - c, axis=1) - R)
        on_hole = (da < ON_CURVE_RTOL * R) & (db < ON_CURVE_RTOL * R) & ~on_outer
        z = out[on_hole] - c
        out[on_hole] = c + R * z / np.linalg.norm(z, axis=1)[:, None]
    return out


def refine(mesh: TriMesh) -> TriMesh:
    """Split every triangle into four through its edge midpoints.

    Midpoints of boundary edges on curved boundary pieces are moved onto the
    exact boundary.
    """
    tris = mesh.triangles
    nv = mesh.n_vertices
    e = _edges(tris)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel()
    m = len(tris)
    mid_id = nv + inv
    e01, e12, e20 = mid_id[:m], mid_id[m:2 * m], mid_id[2 * m:]
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    new_tris = np.concatenate([
        np.stack([v0, e01, e20], 1), np.stack([e01, v1, e12], 1),
        np.stack([e20, e12, v2], 1), np.stack([e01, e12, e20], 1)])
    # boundary flags of unique edges
    _, counts = np.unique(e, axis=0, return_counts=True)
    is_bnd = counts == 1
    dom = mesh.parent_domain
    curved = dom is not None and dom.kind != "polygon"
    x_mid = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    if dom is not None and dom.kind == "fermi_half_ball":
        ref_mid = chart_inverse(dom.chart, x_mid)
        ref_mid[:, 0] = np.maximum(ref_mid[:, 0], 0.0)
        ra, rb = mesh.ref[uniq[:, 0]], mesh.ref[uniq[:, 1]]
        straight = 0.5 * (ra + rb)
        # boundary midpoints are taken in chart coordinates then snapped
        ref_mid[is_bnd] = _project_boundary(mesh, straight[is_bnd], ra[is_bnd], rb[is_bnd])
        flat = is_bnd & (np.abs(ra[:, 0]) < 1e-15) & (np.abs(rb[:, 0]) < 1e-15)
        ref_mid[flat, 0] = 0.0
        new_x = x_mid.copy()
        new_x[is_bnd] = chart_forward(dom.chart, ref_mid[is_bnd])
    else:
        ref_mid = x_mid.copy()
        if curved:
            ra, rb = mesh.ref[uniq[is_bnd, 0]], mesh.ref[uniq[is_bnd, 1]]
            ref_mid[is_bnd] = _project_boundary(mesh, x_mid[is_bnd], ra, rb)
        new_x = ref_mid
    verts = np.vstack([mesh.vertices, new_x])
    ref = np.vstack([mesh.ref, ref_mid])
    mask = _boundary_mask(len(verts), new_tris)
    out = TriMesh(verts, new_tris, mask, mesh.origin_id, mesh.grading_beta, dom, ref=ref,
                  level=mesh.level + 1, meta=dict(mesh.meta))
    if not np.all(signed_areas(out.vertices, out.triangles) > 0):
        raise MeshError("boundary reprojection produced an inverted element")
    return out


def prolongation(coarse: TriMesh, fine: TriMesh):
    """Sparse matrix interpolating P1 nodal values from ``coarse`` to ``refine(coarse)``."""
    from scipy.sparse import coo_matrix
    e = _edges(coarse.triangles)
    uniq = np.unique(e, axis=0)
    nv = coarse.n_vertices
    rows = np.concatenate([np.arange(nv), nv + np.arange(len(uniq)), nv + np.arange(len(uniq))])
    cols = np.concatenate([np.arange(nv), uniq[:, 0], uniq[:, 1]])
    vals = np.concatenate([np.ones(nv), 0.5 * np.ones(len(uniq)), 0.5 * np.ones(len(uniq))])
    return coo_matrix((vals, (rows, cols)), shape=(fine.n_vertices, nv)).tocsr()


# ---------------------------------------------------------------------------
# diagnostics

def mesh_quality(mesh: TriMesh) -> dict:
    ang = triangle_angles(mesh.vertices, mesh.triangles)
    p = mesh.vertices[mesh.triangles]
    lengths = np.stack([np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3)], 1)
    area = signed_areas(mesh.vertices, mesh.triangles)
    # aspect ratio: longest edge over the altitude-equivalent 2*sqrt(3)*inradius
    semi = lengths.sum(1) / 2
    inradius = np.abs(area) / semi
    aspect = lengths.max(1) / (2 * math.sqrt(3) * inradius)
    return {
        "min_angle": float(ang.min()),
        "max_aspect": float(aspect.max()),
        "h_max": float(lengths.max()),
        "h_min": float(lengths.min()),
        "n_vertices": mesh.n_vertices,
        "n_triangles": mesh.n_triangles,
        "n_free": int((~mesh.dirichlet_mask).sum()),
        "area": float(area.sum()),
    }


def corner_angle(dom: DomainSpec, r_meshed=None) -> float:
    """Smallest interior corner angle of the domain boundary, in degrees."""
    r = dom.r if r_meshed is None else r_meshed
    if dom.kind == "exterior_cap" and r < 2 * dom.hole_radius:
        return math.degrees(math.acos(r / (2 * dom.hole_radius)))
    if dom.kind == "sector":
        return min(90.0, math.degrees(dom.theta))
    if dom.kind == "polygon":
        v = np.asarray(dom.vertices, dtype=float)
        e1 = np.roll(v, -1, axis=0) - v
        e0 = v - np.roll(v, 1, axis=0)
        cos = -np.sum(e0 * e1, axis=1) / (np.linalg.norm(e0, axis=1) * np.linalg.norm(e1, axis=1))
        return float(np.degrees(np.arccos(np.clip(cos, -1, 1))).min())
    return 90.0


def check_invariants(mesh: TriMesh, min_angle: float = 20.0) -> list:
    """Return a list of violated mesh invariants (empty when the mesh is valid).

    The angle bound is relaxed to 70% of the sharpest domain corner when that
    corner is itself narrower than ``min_angle``.
    """
    bad = []
    if mesh.parent_domain is not None:
        corner = corner_angle(mesh.parent_domain, mesh.meta.get("r_meshed"))
        min_angle = min(min_angle, 0.7 * corner)
    area = signed_areas(mesh.vertices, mesh.triangles)
    if not np.all(area > 0):
        bad.append("non-positive element area")
    be = boundary_edges(mesh.triangles)
    if not np.all(mesh.dirichlet_mask[be.ravel()]):
        bad.append("boundary edge with unmasked vertex")
    o = mesh.vertices[mesh.origin_id]
    if np.linalg.norm(o) >= 1e-14:
        bad.append("origin vertex not at 0")
    if not mesh.dirichlet_mask[mesh.origin_id]:
        bad.append("origin vertex not Dirichlet")
    ang = triangle_angles(mesh.vertices, mesh.triangles).min()
    if ang < min_angle:
        bad.append(f"minimum angle {ang:.2f} below {min_angle}")
    dom = mesh.parent_domain
    if dom is not None and not inside_closed_domain(dom, mesh.vertices, mesh.meta.get("r_meshed")).all():
        bad.append("vertex outside the closed domain")
    return bad


def inside_closed_domain(dom: DomainSpec, x: np.ndarray, r_meshed=None, tol: float = 1e-10):
    x = np.asarray(x, dtype=float)
    rho = np.linalg.norm(x, axis=1)
    if r_meshed is not None and dom.kind == "exterior_cap":
        dom = DomainSpec("exterior_cap", r=r_meshed, hole_radius=dom.hole_radius)
    if dom.kind == "half_disk":
        return (x[:, 0] >= -tol) & (rho <= dom.r + tol)
    if dom.kind == "sector":
        ang = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * math.pi)
        ang = np.where((ang > dom.theta + tol) & (ang > 2 * math.pi - tol), 0.0, ang)
        return (rho <= dom.r + tol) & ((ang <= dom.theta + tol) | (rho < tol))
    if dom.kind == "fermi_half_ball":
        y = chart_inverse(dom.chart, x)
        return (y[:, 0] >= -tol) & (np.linalg.norm(y, axis=1) <= dom.r + tol)
    if dom.kind == "exterior_cap":
        c = np.array([-dom.hole_radius, 0.0])
        return (rho <= dom.r + tol) & (np.linalg.norm(x - c, axis=1) >= dom.hole_radius - tol)
    return np.ones(len(x), dtype=bool)
