"""Quotient problems built on top of meshing, assembly and the eigensolver.

The central object is :class:`QuotientProblem`; :func:`compute_mu` runs it
along a refinement chain.  The remaining operations reuse the same forms
``A = K_p - lam * M_eta`` and ``B = M_q`` on fixed meshes.
"""
from __future__ import annotations

import ast
import logging
import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .assembly import WeightKind, element_mass, mass, stiffness
from .geometry import DomainSpec, FermiChart, chart_forward, chart_jacobian
from .linalg import EigenResult, min_gen_eig, smallest_dirichlet_eigenvalue
from .mesh import TriMesh, generate, inside_closed_domain, mesh_quality, prolongation, refine

log = logging.getLogger(__name__)

FieldLike = Union[None, str, Callable]


class ProblemError(ValueError):
    pass


class MonotonicityWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# scalar fields given as small expressions in x1, x2, r, r2

_FUNCS = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt, "sin": np.sin, "cos": np.cos,
          "abs": np.abs, "tanh": np.tanh}
_NAMES = {"x1", "x2", "r", "r2", "pi"}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load, ast.Call,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def parse_field(expr: str) -> Callable:
    """Compile an arithmetic expression such as ``"1 + r2"`` into a vectorised field.

    Allowed names: ``x1, x2, r, r2, pi`` and the functions ``exp, log, sqrt,
    sin, cos, abs, tanh``.
    """
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise ProblemError(f"field expression {expr!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ProblemError(f"field expression {expr!r}: {type(node).__name__} not allowed")
        if isinstance(node, ast.Name) and node.id not in _NAMES | set(_FUNCS):
            raise ProblemError(f"field expression {expr!r}: unknown name {node.id!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name)
                                               and node.func.id in _FUNCS and not node.keywords):
            raise ProblemError(f"field expression {expr!r}: bad function call")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ProblemError(f"field expression {expr!r}: only numeric constants allowed")
    code = compile(tree, "<field>", "eval")

    def fn(x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        env = dict(_FUNCS, x1=x[..., 0], x2=x[..., 1], r=np.sqrt(r2), r2=r2, pi=math.pi)
        val = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(val, dtype=float), x.shape[:-1]).copy()

    fn.expr = expr
    return fn


def _as_field(f: FieldLike) -> Optional[Callable]:
    if f is None or callable(f):
        return f
    return parse_field(f)


def _field_label(f: FieldLike):
    if f is None or isinstance(f, str):
        return f
    return getattr(f, "expr", getattr(f, "__name__", "<callable>"))


# ---------------------------------------------------------------------------
# problem description

@dataclass
class QuotientProblem:
    """Weighted quotient ``(int p|grad u|^2 - lam int eta u^2/|x|^2) / int q u^2/|x|^2``.

    ``p``, ``q`` default to 1 and ``eta`` to ``|x|^2``, which is the plain
    quotient with ``lam int u^2`` in the numerator.  Fields are callables or
    expression strings (see :func:`parse_field`).  ``refinements`` is the
    number of meshes in the chain, the first generated at size ``h``.
    """
    domain: DomainSpec
    lam: float = 0.0
    N: int = 2
    p: FieldLike = None
    q: FieldLike = None
    eta: FieldLike = None
    h: float = 0.1
    beta: float = 2.0
    refinements: int = 3
    floor: Optional[float] = None
    tol: float = 1e-9
    quad_tol: float = 1e-8

    def __post_init__(self):
        if self.N != 2:
            raise ProblemError("N: meshed problems are two-dimensional")
        if self.refinements < 1:
            raise ProblemError("refinements: need at least one mesh")
        if not math.isfinite(self.lam):
            raise ProblemError("lam: must be finite")
        for name in ("p", "q", "eta"):
            _as_field(getattr(self, name))   # validate expressions early

    @property
    def weighted(self) -> bool:
        return any(f is not None for f in (self.p, self.q, self.eta))

    def to_dict(self) -> dict:
        return {"domain": self.domain.to_dict(), "lam": self.lam, "N": self.N,
                "p": _field_label(self.p), "q": _field_label(self.q), "eta": _field_label(self.eta),
                "h": self.h, "beta": self.beta, "refinements": self.refinements,
                "floor": self.floor, "tol": self.tol, "quad_tol": self.quad_tol}

    @classmethod
    def from_dict(cls, d: dict) -> "QuotientProblem":
        allowed = {"domain", "lam", "N", "p", "q", "eta", "h", "beta", "refinements", "floor",
                   "tol", "quad_tol"}
        unknown = set(d) - allowed
        if unknown:
            raise ProblemError(f"unknown problem keys: {sorted(unknown)}")
        kw = dict(d)
        kw["domain"] = DomainSpec.from_dict(d["domain"]) if isinstance(d.get("domain"), dict) \
            else d.get("domain")
        if kw["domain"] is None:
            raise ProblemError("domain: missing")
        return cls(**kw)

    def check_fields(self, x: np.ndarray) -> None:
        """Validate positivity of ``p, q`` and ``eta >= 0`` with ``eta(0) = 0`` on sample points."""
        for name in ("p", "q"):
            f = _as_field(getattr(self, name))
            if f is not None and np.any(f(x) <= 0):
                raise ProblemError(f"{name}: field must be positive on the domain")
        eta = _as_field(self.eta)
        if eta is not None:
            if np.any(eta(x) < 0):
                raise ProblemError("eta: field must be nonnegative")
            ray = np.array([[1e-9, 0.0], [1e-9 * math.sqrt(0.5), 1e-9 * math.sqrt(0.5)]])
            if np.any(np.abs(eta(ray)) > 1e-8):
                raise ProblemError("eta: must vanish at the origin")

    def mesh(self) -> TriMesh:
        return generate(self.domain, self.h, self.beta, floor=self.floor)


@dataclass
class Forms:
    """Matrices of one problem on one mesh; ``A(lam) = K - lam * M``."""
    mesh: TriMesh
    K: object
    M: object
    B: object

    def A(self, lam: float):
        return self.K if lam == 0 else self.K - lam * self.M


def assemble_forms(problem: QuotientProblem, mesh: TriMesh) -> Forms:
    """Stiffness with ``p``, the ``eta/|x|^2`` form and the ``q/|x|^2`` form."""
    p, q, eta = (_as_field(f) for f in (problem.p, problem.q, problem.eta))
    if problem.weighted:
        problem.check_fields(mesh.vertices[mesh.free])
    K = stiffness(mesh, p)
    M = mass(mesh, WeightKind.one() if eta is None else WeightKind.field(eta, "inv_r2"),
             tol=problem.quad_tol)
    B = mass(mesh, WeightKind.inv_r2() if q is None else WeightKind.field(q, "inv_r2"),
             tol=problem.quad_tol)
    return Forms(mesh, K, M, B)


def _prolong(coarse: TriMesh, fine: TriMesh, vec: np.ndarray) -> np.ndarray:
    full = np.zeros(coarse.n_vertices)
    full[coarse.free] = vec
    return (prolongation(coarse, fine) @ full)[fine.free]


def full_vector(mesh: TriMesh, vec: np.ndarray) -> np.ndarray:
    """Nodal values on every vertex (zero on the Dirichlet boundary)."""
    out = np.zeros(mesh.n_vertices)
    out[mesh.free] = vec
    return out


@dataclass
class TraceRow:
    level: int
    mu: float
    residual: float
    iterations: int
    converged: bool
    n_free: int
    h_min: float
    h_max: float
    fingerprint: str
    seconds: float


@dataclass
class MuResult:
    mu_h: float
    eigen: EigenResult
    trace: List[TraceRow]
    mesh: TriMesh

    @property
    def values(self) -> List[float]:
        return [t.mu for t in self.trace]


def _row(level, eig: EigenResult, mesh: TriMesh, seconds: float) -> TraceRow:
    q = mesh_quality(mesh)
    return TraceRow(level, eig.value, eig.residual, eig.iterations, eig.converged,
                    int(q["n_free"]), float(q["h_min"]), float(q["h_max"]),
                    mesh.fingerprint(), seconds)


def mesh_chain(problem: QuotientProblem):
    """Yield the meshes of the refinement chain, coarse to fine."""
    m = problem.mesh()
    for k in range(problem.refinements):
        yield k, m
        if k < problem.refinements - 1:
            m = refine(m)


def _monotone_check(values: Sequence[float], what: str) -> None:
    for a, b in zip(values, values[1:]):
        if b > a + 1e-10 * max(1.0, abs(a)):
            warnings.warn(f"{what} trace not monotone: {a!r} -> {b!r}", MonotonicityWarning,
                          stacklevel=3)
            return


def _chain_eig(problem: QuotientProblem, build: Callable[[TriMesh], tuple], what: str):
    trace, prev, eig = [], None, None
    for k, m in mesh_chain(problem):
        t0 = time.perf_counter()
        A, B = build(m)
        x0 = None if eig is None else _prolong(prev, m, eig.vector)
        eig = min_gen_eig(A, B, tol=problem.tol, x0=x0)
        trace.append(_row(k, eig, m, time.perf_counter() - t0))
        log.info("%s level %d: %.10g (%d dofs, %d its)", what, k, eig.value, trace[-1].n_free,
                 eig.iterations)
        prev = m
    _monotone_check([t.mu for t in trace], what)
    return MuResult(eig.value, eig, trace, prev)


def compute_mu(problem: QuotientProblem) -> MuResult:
    """Discrete infimum ``mu^h`` along the refinement chain (warm-started)."""
    def build(m):
        f = assemble_forms(problem, m)
        return f.A(problem.lam), f.B
    return _chain_eig(problem, build, "mu")


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepResult:
    axis: str
    values: List[float]
    mu: List[float]
    eigen: List[EigenResult]
    fingerprints: List[str]
    level: List[int]
    h_min: List[float]
    h_max: List[float]

    def rows(self) -> List[dict]:
        return [{self.axis: v, "mu": m, "residual": e.residual, "iterations": e.iterations,
                 "converged": e.converged, "level": lv, "h_min": a, "h_max": b, "fingerprint": f}
                for v, m, e, lv, a, b, f in zip(self.values, self.mu, self.eigen, self.level,
                                                  self.h_min, self.h_max, self.fingerprints)]


def _finest_mesh(problem: QuotientProblem) -> tuple:
    level, mesh = 0, None
    for level, mesh in mesh_chain(problem):
        pass
    return level, mesh


def mu_sweep(problem: QuotientProblem, lambdas: Sequence[float], mesh: Optional[TriMesh] = None,
             level: Optional[int] = None, forms: Optional[Forms] = None) -> SweepResult:
    """``mu^h`` for each ``lam`` on one fixed mesh (the finest of the chain by default).

    Raises :class:`ProblemError` unless the values come out strictly decreasing.
    """
    lams = [float(v) for v in lambdas]
    if not lams:
        raise ProblemError("lambdas: empty list")
    if len(set(lams)) != len(lams):
        raise ProblemError("lambdas: duplicate values")
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ProblemError("lambdas: must be ascending")
    if forms is None:
        if mesh is None:
            level, mesh = _finest_mesh(problem)
        forms = assemble_forms(problem, mesh)
    mesh = forms.mesh
    q = mesh_quality(mesh)
    fp = mesh.fingerprint()
    out, x0 = [], None
    for lam in lams:
        eig = min_gen_eig(forms.A(lam), forms.B, tol=problem.tol, x0=x0)
        x0 = eig.vector
        out.append(eig)
    mus = [e.value for e in out]
    for (l0, a), (l1, b) in zip(zip(lams, mus), zip(lams[1:], mus[1:])):
        if not b < a:
            raise ProblemError(f"sweep not strictly decreasing: mu({l0})={a!r}, mu({l1})={b!r}")
    n = len(lams)
    lv = -1 if level is None else level
    return SweepResult("lambda", lams, mus, out, [fp] * n, [lv] * n,
                       [float(q["h_min"])] * n, [float(q["h_max"])] * n)


# ---------------------------------------------------------------------------
# threshold lambda*

@dataclass
class LambdaStarLevel:
    level: int
    lam_star: float
    lo: float
    hi: float
    evaluations: int
    lambda1: float
    n_free: int
    fingerprint: str


def lambda_star_on_forms(forms: Forms, N: int = 2, bracket=None, eps_detect: float = 0.02,
                         bisect_tol: float = 1e-2, tol: float = 1e-9, level: int = 0,
                         lambda1: Optional[float] = None) -> LambdaStarLevel:
    """Bisection for ``sup{lam : mu^h_lam >= N^2/4 - eps_detect}`` on one mesh."""
    if not eps_detect > 0:
        raise ProblemError("eps_detect: must be positive (exact plateau detection is meaningless)")
    if not bisect_tol > 0:
        raise ProblemError("bisect_tol: must be positive")
    level_mu = N * N / 4.0 - eps_detect
    state = {"x": None, "n": 0}

    def mu(lam):
        eig = min_gen_eig(forms.A(lam), forms.B, tol=tol, x0=state["x"])
        state["x"] = eig.vector
        state["n"] += 1
        return eig.value

    if lambda1 is None:
        lambda1 = smallest_dirichlet_eigenvalue(forms.mesh, tol=tol).value
    lo, hi = (0.0, lambda1) if bracket is None else map(float, bracket)
    if not lo < hi:
        raise ProblemError("bracket: need lo < hi")
    for _ in range(60):
        if mu(hi) < level_mu:
            break
        hi = hi + max(abs(hi), 1.0)
    else:
        raise ProblemError("bracket expansion failed: mu stays on the plateau")
    for _ in range(60):
        if mu(lo) >= level_mu:
            break
        lo = lo - max(abs(lo), 1.0)
    else:
        raise ProblemError("bracket expansion failed: mu below the plateau band everywhere tested "
                           "(discretization too coarse to see the plateau)")
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        if mu(mid) >= level_mu:
            lo = mid
        else:
            hi = mid
    m = forms.mesh
    return LambdaStarLevel(level, 0.5 * (lo + hi), lo, hi, state["n"], lambda1,
                           len(m.free), m.fingerprint())


def lambda_star(problem: QuotientProblem, bracket=None, eps_detect: float = 0.02,
                bisect_tol: float = 1e-2) -> List[LambdaStarLevel]:
    """``lambda*_h`` on every mesh of the refinement chain."""
    out = []
    for k, m in mesh_chain(problem):
        forms = assemble_forms(problem, m)
        res = lambda_star_on_forms(forms, problem.N, bracket, eps_detect, bisect_tol,
                                   problem.tol, level=k)
        log.info("lambda* level %d: %.6g in [%.6g, %.6g]", k, res.lam_star, res.lo, res.hi)
        out.append(res)
    return out


# ---------------------------------------------------------------------------
# scaling argument: pushed-forward test profiles

@dataclass
class Profile:
    """Test function on the half plane ``{z1 > 0}`` with a quadrature rule covering its support."""
    value: Callable
    grad: Callable
    points: np.ndarray
    weights: np.ndarray
    radius: float          # support lies in |z| <= radius
    name: str = "profile"


def bubble_profile(n_rad: int = 24, n_ang: int = 48) -> Profile:
    """``u(z) = z1 * max(0, 1 - |z - (1/2, 0)|^2 / 0.16)^2``."""
    c, s2 = np.array([0.5, 0.0]), 0.16

    def value(z):
        d = z - c
        b = np.maximum(0.0, 1 - np.sum(d * d, -1) / s2)
        return z[..., 0] * b * b

    def grad(z):
        d = z - c
        b = np.maximum(0.0, 1 - np.sum(d * d, -1) / s2)
        g = (-4 * z[..., 0] * b / s2)[..., None] * d
        g[..., 0] += b * b
        return g

    t, wt = np.polynomial.legendre.leggauss(n_rad)
    rad = 0.2 * (t + 1)
    wr = 0.2 * wt
    ang = 2 * math.pi * np.arange(n_ang) / n_ang
    R, A = np.meshgrid(rad, ang, indexing="ij")
    pts = c + np.stack([R * np.cos(A), R * np.sin(A)], -1).reshape(-1, 2)
    w = (wr[:, None] * R * (2 * math.pi / n_ang)).reshape(-1)
    return Profile(value, grad, pts, w, 0.9, "bubble")


def log_profile(L: float = 15.0, n_t: int = 200, n_phi: int = 24) -> Profile:
    """``u(z) = (z1/|z|) sin(pi (log|z| + L)/L)`` on ``e^-L < |z| < 1``.

    Its flat quotient is ``1 + (pi/L)^2``.
    """
    k = math.pi / L

    def value(z):
        rho = np.linalg.norm(z, axis=-1)
        g = np.where(rho < 1, np.sin(k * (np.log(rho) + L)), 0.0)
        return z[..., 0] / rho * g

    def grad(z):
        rho = np.linalg.norm(z, axis=-1)
        t = np.log(rho) + L
        g = np.where(rho < 1, np.sin(k * t), 0.0)
        dg = np.where(rho < 1, k * np.cos(k * t), 0.0)
        c1 = z[..., 0] / rho
        gc = -(c1 / rho ** 2)[..., None] * z
        gc[..., 0] += 1 / rho
        return gc * g[..., None] + (c1 * dg / rho ** 2)[..., None] * z

    tt, wt = np.polynomial.legendre.leggauss(n_t)
    t = -L / 2 * (1 - tt)             # log radius in (-L, 0)
    w_t = L / 2 * wt
    pp, wp = np.polynomial.legendre.leggauss(n_phi)
    phi, w_phi = pp * math.pi / 2, wp * math.pi / 2
    T, P = np.meshgrid(t, phi, indexing="ij")
    rho = np.exp(T)
    pts = np.stack([rho * np.cos(P), rho * np.sin(P)], -1).reshape(-1, 2)
    w = (w_t[:, None] * w_phi[None, :] * rho ** 2).reshape(-1)
    return Profile(value, grad, pts, w, 1.0, f"log{L:g}")


def flat_quotient(profile: Profile, lam: float = 0.0, eps: float = 1.0) -> float:
    """Quotient of ``u(x/eps)`` on the half plane itself."""
    z, w = profile.points, profile.weights
    u, g = profile.value(z), profile.grad(z)
    D = np.sum(w * np.sum(g * g, -1))
    M0 = np.sum(w * u * u) * eps * eps
    W = np.sum(w * u * u / np.sum(z * z, -1))
    return float((D - lam * M0) / W)


def _domain_chart(domain: DomainSpec) -> FermiChart:
    if domain.kind == "half_disk":
        return FermiChart("plane")
    if domain.kind == "fermi_half_ball":
        return domain.chart
    raise ProblemError("domain: the scaling bound needs a half_disk or fermi_half_ball")


def pushed_quotient(profile: Profile, domain: DomainSpec, eps: float, lam: float = 0.0) -> float:
    """Quotient of ``v(x) = u(F^{-1}(x)/eps)`` on ``domain`` by quadrature in ``z``."""
    chart = _domain_chart(domain)
    if not eps > 0:
        raise ProblemError("eps: must be positive")
    if profile.radius * eps >= domain.r:
        raise ProblemError(f"support escapes the domain at eps={eps:g}")
    z, w = profile.points, profile.weights
    y = eps * z
    x = chart_forward(chart, y)
    if not np.all(inside_closed_domain(domain, x)):
        raise ProblemError(f"support escapes the domain at eps={eps:g}")
    J = chart_jacobian(chart, y)
    det = np.abs(np.linalg.det(J))
    gy = profile.grad(z)                                  # gradient in z
    gx = np.linalg.solve(np.swapaxes(J, -1, -2), gy[..., None])[..., 0]
    u = profile.value(z)
    D = np.sum(w * det * np.sum(gx * gx, -1))
    M0 = np.sum(w * det * u * u) * eps * eps
    W = np.sum(w * det * u * u / np.sum(x * x, -1)) * eps * eps
    return float((D - lam * M0) / W)


def scaling_upper_bound(problem: QuotientProblem, eps_list: Sequence[float],
                        profile: Optional[Profile] = None) -> List[float]:
    """Quotient of the profile pushed into the domain at each scale ``eps``."""
    if problem.weighted:
        raise ProblemError("scaling_upper_bound: plain quotient only (p, q, eta unset)")
    profile = bubble_profile() if profile is None else profile
    return [pushed_quotient(profile, problem.domain, e, problem.lam) for e in eps_list]


# ---------------------------------------------------------------------------
# improved Hardy remainder

@dataclass
class HardyResult:
    r: float
    include_distance_term: bool
    c_h: float
    trace: List[TraceRow]

    @property
    def values(self) -> List[float]:
        return [t.mu for t in self.trace]


def improved_hardy_constant(r: float, include_distance_term: bool = True,
                            chart: Optional[FermiChart] = None, domain: Optional[DomainSpec] = None,
                            h: Optional[float] = None, beta: float = 2.0,
                            floor: Optional[float] = None, refinements: int = 3,
                            tol: float = 1e-9, dist_tol: float = 1e-6) -> HardyResult:
    """Discrete remainder constant of the improved Hardy inequality.

    ``c_h = min (u'Ku - (N^2/4) u'B u - [flag](N-1) u'D u) / u'Lu`` where
    ``B`` carries ``|x|^-2``, ``D`` the inverse distance to the surface and
    ``L`` the weight ``|x|^-2 log^-2 |x|``.  The domain defaults to the Fermi
    half ball of radius ``r`` (sphere exterior chart); pass a half disk or
    sector as ``domain`` for the flat variant.
    """
    N = 2
    chart = FermiChart("sphere_exterior") if chart is None else chart
    if domain is None:
        domain = DomainSpec("fermi_half_ball", r=r, chart=chart)
    elif domain.kind not in ("half_disk", "sector", "fermi_half_ball"):
        raise ProblemError("domain: half_disk, sector or fermi_half_ball expected")
    if domain.diameter >= 1:
        raise ProblemError("r: the log weight needs a domain of diameter < 1")
    surface = domain.surface_chart()
    problem = QuotientProblem(domain, h=r / 10 if h is None else h, beta=beta,
                              refinements=refinements, floor=floor, tol=tol)

    def build(m):
        A = stiffness(m) - (N * N / 4.0) * mass(m, WeightKind.inv_r2())
        if include_distance_term:
            A = A - (N - 1) * mass(m, WeightKind.inv_dist(surface), tol=dist_tol)
        return A, mass(m, WeightKind.inv_r2_log2())

    res = _chain_eig(problem, build, "c_h")
    return HardyResult(r, include_distance_term, res.mu_h, res.trace)


# ---------------------------------------------------------------------------
# exterior domains

@dataclass
class TransitionResult:
    sweep: SweepResult
    r_hat: Optional[float]
    bracket: Optional[tuple]
    monotone: bool


def exterior_transition(r_list: Sequence[float], hole_radius: float = 1.0, lam: float = 0.0,
                        eps_detect: float = 0.02, h: float = 0.1, beta: float = 1.0,
                        floor: Optional[float] = 1e-12, refinements: int = 2,
                        tol: float = 1e-9) -> TransitionResult:
    """``mu^h`` on ``B_r`` outside a disk tangent at the origin, for increasing ``r``.

    ``r_hat`` is the largest tested radius still in the plateau band and
    ``bracket`` pairs it with the next radius (``None`` if no crossing).
    """
    rs = [float(r) for r in r_list]
    if not rs or any(b <= a for a, b in zip(rs, rs[1:])):
        raise ProblemError("r_list: must be nonempty and strictly ascending")
    if rs[-1] > 12 * hole_radius:
        raise ProblemError("r_list: exterior caps are capped at r = 12 hole radii")
    mus, eigs, fps, lv, hmin, hmax = [], [], [], [], [], []
    for r in rs:
        prob = QuotientProblem(DomainSpec("exterior_cap", r=r, hole_radius=hole_radius), lam=lam,
                               h=h, beta=beta, refinements=refinements, floor=floor, tol=tol)
        res = compute_mu(prob)
        q = mesh_quality(res.mesh)
        mus.append(res.mu_h)
        eigs.append(res.eigen)
        fps.append(res.mesh.fingerprint())
        lv.append(refinements - 1)
        hmin.append(float(q["h_min"]))
        hmax.append(float(q["h_max"]))
        log.info("exterior r=%g: mu=%.8g", r, res.mu_h)
    monotone = all(b <= a + 1e-10 for a, b in zip(mus, mus[1:]))
    if not monotone:
        warnings.warn("exterior transition not monotone in r", MonotonicityWarning, stacklevel=2)
    band = 1.0 - eps_detect
    on = [i for i, m in enumerate(mus) if m >= band]
    r_hat = rs[on[-1]] if on else None
    bracket = None
    if on and on[-1] + 1 < len(rs):
        bracket = (rs[on[-1]], rs[on[-1] + 1])
    sweep = SweepResult("r", rs, mus, eigs, fps, lv, hmin, hmax)
    return TransitionResult(sweep, r_hat, bracket, monotone)


# ---------------------------------------------------------------------------
# concentration diagnostic

def concentration_ratio(eigen: EigenResult, mesh: TriMesh, rho: float,
                        weight: Optional[WeightKind] = None) -> float:
    """Share of ``u'Bu`` carried by elements inside ``|x| <= rho`` (``B`` = ``|x|^-2`` mass).

    ``rho`` may range up to the diameter, where the ratio is 1.
    """
    diam = float(np.max(np.linalg.norm(mesh.vertices, axis=1)))
    if not 0 < rho <= 2 * diam:
        raise ProblemError("rho: must lie in (0, diameter]")
    if len(eigen.vector) != len(mesh.free):
        raise ProblemError("eigen vector does not match the mesh")
    w = WeightKind.inv_r2() if weight is None else weight
    u = full_vector(mesh, eigen.vector)[mesh.triangles]
    local = np.einsum("ti,tij,tj->t", u, element_mass(mesh, w), u)
    r_el = np.linalg.norm(mesh.vertices, axis=1)[mesh.triangles].max(1)
    inside = r_el <= rho * (1 + 1e-12)
    total = local.sum()
    if not total > 0:
        raise ProblemError("eigenvector has no weighted mass")
    return float(min(1.0, max(0.0, local[inside].sum() / total)))
