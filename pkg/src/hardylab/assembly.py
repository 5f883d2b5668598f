"""P1 stiffness and weighted mass matrices.

Weighted integrals use an adaptive rule: every element is integrated with a
fixed triangle rule and again as four children; cells whose two estimates
disagree are split further.  Subdivision happens in the barycentric
coordinates of the parent element, so the P1 basis values at a quadrature node
are just its parent barycentric coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.special import roots_jacobi, roots_legendre

from .geometry import FermiChart, chart_inverse, distance_to_surface
from .mesh import TriMesh, signed_areas

WEIGHT_TAGS = ("one", "inv_r2", "inv_r2_log2", "inv_dist", "field")


class AssemblyError(ValueError):
    pass


class QuadratureError(ArithmeticError):
    """Adaptive element quadrature hit its depth cap."""


# ---------------------------------------------------------------------------
# quadrature

def _conical_rule(n):
    # Gauss-Jacobi in the collapsed direction absorbs the (1 - x) Jacobian
    tj, wj = roots_jacobi(n, 1.0, 0.0)
    tl, wl = roots_legendre(n)
    x = (1 + tj) / 2
    y01 = (1 + tl) / 2
    X = np.repeat(x, n)
    Y = (1 - X) * np.tile(y01, n)
    W = np.outer(wj, wl).ravel()
    W = W / W.sum()
    return np.stack([1 - X - Y, X, Y], 1), W


_A4, _B4 = 0.445948490915965, 0.091576213509771
_RULES = {
    2: (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3)),
    4: (np.array([[1 - 2 * _A4, _A4, _A4], [_A4, 1 - 2 * _A4, _A4], [_A4, _A4, 1 - 2 * _A4],
                  [1 - 2 * _B4, _B4, _B4], [_B4, 1 - 2 * _B4, _B4], [_B4, _B4, 1 - 2 * _B4]]),
        np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)),
    7: _conical_rule(4),
}


def triangle_quadrature(order: int):
    """Barycentric points and weights (summing to 1) exact up to ``order``."""
    if order not in _RULES:
        raise AssemblyError(f"unsupported quadrature order {order}; choose 2, 4 or 7")
    pts, w = _RULES[order]
    return pts.copy(), w / w.sum()


# ---------------------------------------------------------------------------
# weights

@dataclass(frozen=True)
class WeightKind:
    """Weight of a mass form.

    ``field`` carries a scalar callable; ``singular`` multiplies it by one of
    the singular factors (``"inv_r2"`` or ``"inv_r2_log2"``).
    """
    tag: str = "one"
    fn: Optional[Callable] = None
    chart: Optional[FermiChart] = None
    singular: Optional[str] = None

    def __post_init__(self):
        if self.tag not in WEIGHT_TAGS:
            raise AssemblyError(f"unknown weight tag {self.tag!r}")
        if self.tag == "field" and self.fn is None:
            raise AssemblyError("field weight needs a callable")
        if self.tag == "inv_dist" and self.chart is None:
            raise AssemblyError("inv_dist weight needs a chart")
        if self.singular not in (None, "inv_r2", "inv_r2_log2"):
            raise AssemblyError(f"unknown singular factor {self.singular!r}")

    @classmethod
    def one(cls):
        return cls("one")

    @classmethod
    def inv_r2(cls):
        return cls("inv_r2")

    @classmethod
    def inv_r2_log2(cls):
        return cls("inv_r2_log2")

    @classmethod
    def inv_dist(cls, chart: FermiChart):
        return cls("inv_dist", chart=chart)

    @classmethod
    def field(cls, fn: Callable, singular: Optional[str] = None):
        return cls("field", fn=fn, singular=singular)

    @property
    def is_singular(self) -> bool:
        return self.tag in ("inv_r2", "inv_r2_log2", "inv_dist") or self.singular is not None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        if self.tag == "one":
            return np.ones(x.shape[:-1])
        if self.tag == "inv_r2":
            return 1.0 / r2
        if self.tag == "inv_r2_log2":
            return 1.0 / (r2 * (0.5 * np.log(r2)) ** 2)
        if self.tag == "inv_dist":
            return 1.0 / np.abs(distance_to_surface(self.chart, x))
        val = np.asarray(self.fn(x), dtype=float)
        if self.singular == "inv_r2":
            val = val / r2
        elif self.singular == "inv_r2_log2":
            val = val / (r2 * (0.5 * np.log(r2)) ** 2)
        return val


def surface_distance(mesh: TriMesh, chart: FermiChart) -> Callable:
    """Distance to the meshed surface: the boundary edges lying on the chart surface.

    On curved surfaces the boundary chords cut through the true surface, so
    ``1/d_M`` would be non-integrable on boundary elements; the polygonal
    surface agrees with it to O(h^2) and keeps every element integral finite.
    Surface vertices are ordered by their tangential chart coordinate, and a
    point is compared with the chords around its own tangential coordinate.
    """
    from .mesh import boundary_edges

    be = boundary_edges(mesh.triangles)
    dom = mesh.parent_domain
    if dom is not None and dom.kind == "fermi_half_ball" and dom.chart == chart:
        # chart meshes know their surface vertices exactly
        on = mesh.ref[:, 0] == 0.0
    else:
        rho = np.linalg.norm(mesh.vertices, axis=1)
        on = np.abs(distance_to_surface(chart, mesh.vertices)) <= 1e-12 * np.maximum(rho, 1e-300)
        on[mesh.origin_id] = True
    seg = be[on[be[:, 0]] & on[be[:, 1]]]
    if len(seg) == 0:
        raise AssemblyError("inv_dist: no boundary edge lies on the chart surface")
    tang = chart_inverse(chart, mesh.vertices[on])[:, 1]
    ids = np.flatnonzero(on)[np.argsort(tang)]
    tang = np.sort(tang)
    edge_set = {tuple(e) for e in np.sort(seg, axis=1).tolist()}
    pairs = np.stack([ids[:-1], ids[1:]], 1)
    if not all(tuple(sorted(p)) in edge_set for p in pairs.tolist()):
        raise AssemblyError("inv_dist: surface edges do not form a chain")
    a, b = mesh.vertices[pairs[:, 0]], mesh.vertices[pairs[:, 1]]
    nseg = len(pairs)

    def dist(x):
        x = np.asarray(x, dtype=float)
        t = chart_inverse(chart, x)[:, 1]
        j = np.clip(np.searchsorted(tang, t) - 1, 0, nseg - 1)
        best = np.full(len(x), np.inf)
        for off in (-1, 0, 1):
            k = np.clip(j + off, 0, nseg - 1)
            pa, ab = a[k], b[k] - a[k]
            u = np.clip(np.einsum("nd,nd->n", x - pa, ab) / np.einsum("nd,nd->n", ab, ab), 0, 1)
            best = np.minimum(best, np.linalg.norm(x - pa - u[:, None] * ab, axis=1))
        return best

    return dist


def _check_weight(mesh: TriMesh, w: WeightKind):
    if w.tag == "inv_r2_log2" or w.singular == "inv_r2_log2":
        if np.max(np.linalg.norm(mesh.vertices, axis=1)) >= 1:
            raise AssemblyError("inv_r2_log2 needs the domain inside the unit ball")
    if w.tag == "inv_dist":
        d = distance_to_surface(w.chart, mesh.vertices)
        if np.any(d < -1e-9 * max(1.0, float(np.max(np.abs(d))))):
            raise AssemblyError("inv_dist: the chart surface does not bound the domain")


# ---------------------------------------------------------------------------
# symmetric sparse matrices

class SparseSymMatrix:
    """Immutable symmetric matrix in compressed-row form."""

    def __init__(self, csr: sparse.csr_matrix):
        csr = sparse.csr_matrix(csr)
        csr.sum_duplicates()
        csr.sort_indices()
        self._csr = csr
        self._csr.data.setflags(write=False)

    @property
    def n(self) -> int:
        return self._csr.shape[0]

    @property
    def indptr(self):
        return self._csr.indptr

    @property
    def indices(self):
        return self._csr.indices

    @property
    def values(self):
        return self._csr.data

    @property
    def csr(self) -> sparse.csr_matrix:
        return self._csr

    def __matmul__(self, x):
        return self._csr @ x

    def __add__(self, other):
        return SparseSymMatrix(self._csr + _as_csr(other))

    def __sub__(self, other):
        return SparseSymMatrix(self._csr - _as_csr(other))

    def __mul__(self, c: float):
        return SparseSymMatrix(self._csr * float(c))

    __rmul__ = __mul__

    def diagonal(self):
        return self._csr.diagonal()

    def toarray(self):
        return self._csr.toarray()

    def asymmetry(self) -> float:
        """max |A - A^T| relative to max |A|."""
        d = abs(self._csr - self._csr.T)
        scale = abs(self._csr).max() or 1.0
        return float(d.max() / scale) if d.nnz else 0.0

    def dump(self, path) -> None:
        """Coordinate text format: one ``row col value`` line per stored entry."""
        coo = self._csr.tocoo()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"% {self.n} {self.n} {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {float(v)!r}\n")

    @classmethod
    def load(cls, path) -> "SparseSymMatrix":
        with open(path, encoding="utf-8") as fh:
            n = int(fh.readline().split()[1])
            data = np.loadtxt(fh, ndmin=2)
        return cls(sparse.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                                     shape=(n, n)))


def _as_csr(m):
    return m.csr if isinstance(m, SparseSymMatrix) else sparse.csr_matrix(m)


def _assemble(mesh: TriMesh, local: np.ndarray, reduced: bool) -> SparseSymMatrix:
    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    n = mesh.n_vertices
    mat = sparse.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()
    mat = 0.5 * (mat + mat.T)
    if reduced:
        free = mesh.free
        mat = mat[free][:, free]
    return SparseSymMatrix(mat)


# ---------------------------------------------------------------------------
# element integrals

_CHILDREN = np.array([
    [[1, 0, 0], [.5, .5, 0], [.5, 0, .5]],
    [[.5, .5, 0], [0, 1, 0], [0, .5, .5]],
    [[.5, 0, .5], [0, .5, .5], [0, 0, 1]],
    [[.5, .5, 0], [0, .5, .5], [.5, 0, .5]],
])


def _cell_integrals(xe, area, cells_elem, cells_bary, wfun, rule, mask):
    """Local 3x3 integrals of ``w * phi_i * phi_j`` over each cell."""
    qp, qw = rule
    bary = np.einsum("qk,ckj->cqj", qp, cells_bary)           # parent barycentrics
    x = np.einsum("cqj,cjd->cqd", bary, xe[cells_elem])
    wv = wfun(x.reshape(-1, 2)).reshape(bary.shape[:2])
    if not np.all(np.isfinite(wv)):
        raise AssemblyError("weight is not finite at a quadrature node")
    cell_area = area[cells_elem] * np.abs(np.linalg.det(cells_bary))
    phi = bary * mask[cells_elem][:, None, :]
    return np.einsum("q,cq,cqi,cqj->cij", qw, wv, phi, phi) * cell_area[:, None, None]


def _split(cells_elem, cells_bary):
    kids = np.einsum("kab,cbj->ckaj", _CHILDREN, cells_bary)
    return np.repeat(cells_elem, 4), kids.reshape(-1, 3, 3)


def element_mass(mesh: TriMesh, w: WeightKind, order: int = 7, tol: float = 1e-8,
                 max_depth: int = 20, adaptive: bool = True) -> np.ndarray:
    """Per-element 3x3 matrices of ``int_T w phi_i phi_j``.

    Basis functions of the origin vertex are dropped for singular weights, and
    those of every Dirichlet vertex for ``inv_dist`` (their integrals diverge
    and the vertices are eliminated anyway).
    """
    xe = mesh.vertices[mesh.triangles]
    area = signed_areas(mesh.vertices, mesh.triangles)
    m = len(area)
    if w.tag == "one":
        base = (np.ones((3, 3)) + np.eye(3)) / 12.0
        return area[:, None, None] * base
    _check_weight(mesh, w)
    if w.tag == "inv_dist":
        dist = surface_distance(mesh, w.chart)
        wfun = lambda x: 1.0 / dist(x)
    else:
        wfun = w
    mask = np.ones((m, 3))
    if w.is_singular:
        mask[mesh.triangles == mesh.origin_id] = 0.0
    if w.tag == "inv_dist":
        # boundary basis functions do not vanish where 1/d blows up
        mask[mesh.dirichlet_mask[mesh.triangles]] = 0.0
    rule = triangle_quadrature(order)
    elem = np.arange(m)
    bary = np.broadcast_to(np.eye(3), (m, 3, 3)).copy()
    parent = _cell_integrals(xe, area, elem, bary, wfun, rule, mask)
    if not adaptive:
        return parent
    out = np.zeros((m, 3, 3))
    scale = np.abs(parent).reshape(m, 9).max(1)
    scale[scale == 0] = 1.0
    depth = 0
    while len(elem):
        k_elem, k_bary = _split(elem, bary)
        kids = _cell_integrals(xe, area, k_elem, k_bary, wfun, rule, mask)
        summed = kids.reshape(-1, 4, 3, 3).sum(1)
        err = np.abs(summed - parent).reshape(-1, 9).max(1)
        ok = err <= tol * scale[elem]
        np.add.at(out, elem[ok], summed[ok])
        depth += 1
        if np.all(ok):
            break
        if depth >= max_depth:
            raise QuadratureError(f"element quadrature unconverged after {max_depth} levels")
        keep = np.repeat(~ok, 4)
        elem, bary, parent = k_elem[keep], k_bary[keep], kids[keep]
    return out


def element_stiffness(mesh: TriMesh, p=None, order: int = 4) -> np.ndarray:
    """Per-element 3x3 matrices of ``int_T p grad(phi_i).grad(phi_j)``."""
    xe = mesh.vertices[mesh.triangles]
    area = signed_areas(mesh.vertices, mesh.triangles)
    # gradients of barycentric coordinates: rotated opposite edges over 2*area
    e = np.stack([xe[:, 2] - xe[:, 1], xe[:, 0] - xe[:, 2], xe[:, 1] - xe[:, 0]], 1)
    grad = np.stack([-e[..., 1], e[..., 0]], -1) / (2 * area)[:, None, None]
    G = np.einsum("cid,cjd->cij", grad, grad)
    if p is None:
        return G * area[:, None, None]
    pw = p if isinstance(p, WeightKind) else WeightKind.field(p)
    qp, qw = triangle_quadrature(order)
    x = np.einsum("qk,ckd->cqd", qp, xe)
    pv = pw(x.reshape(-1, 2)).reshape(len(area), -1)
    if np.any(~(pv > 0)):
        raise AssemblyError("stiffness coefficient p must be positive at quadrature nodes")
    return G * (area * (pv @ qw))[:, None, None]


def stiffness(mesh: TriMesh, p=None, order: int = 4, reduced: bool = True) -> SparseSymMatrix:
    """Stiffness matrix; ``p`` is ``None`` (unit), a callable or a field weight."""
    return _assemble(mesh, element_stiffness(mesh, p, order), reduced)


def mass(mesh: TriMesh, w: WeightKind = WeightKind("one"), order: int = 7, tol: float = 1e-8,
         max_depth: int = 20, reduced: bool = True) -> SparseSymMatrix:
    """Weighted mass matrix ``M_ij = int w phi_i phi_j``."""
    if not isinstance(w, WeightKind):
        raise AssemblyError("mass weight must be a WeightKind")
    return _assemble(mesh, element_mass(mesh, w, order, tol, max_depth), reduced)
