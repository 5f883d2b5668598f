"""Self-check suites behind ``hardylab verify``.

Each check returns a row ``{suite, check, value, limit, passed}``; values
are worst-case errors (or observed orders where the limit is a lower bound).
"""
from __future__ import annotations

import math
from typing import List

import numpy as np

SUITES = ("barriers", "charts", "assembly", "eigensolver")


def _row(suite, check, value, limit, lower=False):
    value = float(value)
    ok = value >= limit if lower else value <= limit
    return {"suite": suite, "check": check, "value": value, "limit": float(limit),
            "passed": bool(ok)}


def barriers() -> List[dict]:
    from .closedform import A_SAMPLES, ly_residual_fd, lyoak_residual_fd, observed_order
    rng = np.random.default_rng(7)
    rho = rng.uniform(0.15, 0.6, 20)
    phi = rng.uniform(-1.1, 1.1, 20)
    pts = np.stack([rho * np.cos(phi), rho * np.sin(phi)], 1)
    h = 0.01
    rows = []
    for a in A_SAMPLES:
        o_ly = min(observed_order(lambda s: ly_residual_fd(a, 2, y[None], s)[0], h) for y in pts)
        rows.append(_row("barriers", f"L_y omega_bar order a={a}", o_ly, 1.9, lower=True))
        for K in (0.0, 1.0):
            o = min(observed_order(lambda s: lyoak_residual_fd(a, K, 2, y[None], s)[0], h)
                    for y in pts)
            rows.append(_row("barriers", f"L_y omega_a,K order a={a} K={K:g}", o, 1.9, lower=True))
    return rows


def charts() -> List[dict]:
    from .geometry import FermiChart, chart_forward, chart_inverse, distance_to_surface, \
        mean_curvature_term
    from .closedform import fd_laplacian
    rng = np.random.default_rng(11)
    rows = []
    for kind in ("plane", "sphere_exterior", "sphere_interior"):
        ch = FermiChart(kind)
        rad = rng.uniform(0, 0.45, 200)
        ang = rng.uniform(-math.pi / 2, math.pi / 2, 200)
        y = np.stack([rad * np.cos(ang), rad * np.sin(ang)], 1)
        x = chart_forward(ch, y)
        scale = np.maximum(np.linalg.norm(y, axis=1), 1e-300)[:, None]
        err = np.max(np.abs(chart_inverse(ch, x) - y) / scale)
        rows.append(_row("charts", f"{kind} round trip", err, 10 * np.finfo(float).eps))
        small = rad <= 0.1
        dev = np.abs(np.linalg.norm(x, axis=1) - rad)[small] / rad[small] ** 2
        rows.append(_row("charts", f"{kind} |F(y)| - |y| <= |y|^2", dev.max(), 1.0))
        d = lambda z: distance_to_surface(ch, z)
        xs = x[(rad > 0.1)]
        lap = fd_laplacian(d, xs, 1e-3)
        cerr = np.max(np.abs(lap - mean_curvature_term(ch, xs)))
        rows.append(_row("charts", f"{kind} curvature term vs FD", cerr, 1e-4))
    return rows


def assembly() -> List[dict]:
    from .assembly import WeightKind, mass, stiffness, triangle_quadrature
    from .geometry import DomainSpec
    from .mesh import generate, mesh_quality
    rows = []
    for order in (2, 4, 7):
        pts, w = triangle_quadrature(order)
        worst = 0.0
        for i in range(order + 1):
            for j in range(order + 1 - i):
                exact = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
                worst = max(worst, abs(np.sum(w * pts[:, 0] ** i * pts[:, 1] ** j) * 0.5 - exact))
        rows.append(_row("assembly", f"quadrature order {order} exactness", worst, 1e-14))
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    K = stiffness(m, reduced=False)
    rows.append(_row("assembly", "stiffness symmetry", K.asymmetry(), 1e-14))
    rows.append(_row("assembly", "stiffness row sums", np.max(np.abs(K.csr.sum(axis=1))), 1e-12))
    M = mass(m, WeightKind.one(), reduced=False)
    rows.append(_row("assembly", "mass total = mesh area",
                     abs(M.csr.sum() - mesh_quality(m)["area"]), 1e-13))
    one = WeightKind.one()
    B = mass(m, WeightKind.inv_r2())
    Bw = mass(m, WeightKind.field(lambda x: np.ones(x.shape[:-1]), "inv_r2"))
    rows.append(_row("assembly", "weighted reduction B", np.max(np.abs((B - Bw).toarray())), 1e-12))
    Mw = mass(m, WeightKind.field(lambda x: np.sum(x * x, -1), "inv_r2"))
    rows.append(_row("assembly", "weighted reduction M",
                     np.max(np.abs((mass(m, one) - Mw).toarray())), 1e-12))
    return rows


def eigensolver() -> List[dict]:
    from .assembly import WeightKind, mass, stiffness
    from .geometry import DomainSpec
    from .linalg import dense_gen_eig, min_gen_eig
    from .mesh import generate
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        X = rng.standard_normal((50, 50))
        A = X @ X.T + 50 * np.eye(50)
        Y = rng.standard_normal((50, 50))
        B = Y @ Y.T / 50 + np.eye(50)
        worst = max(worst, abs(min_gen_eig(A, B, tol=1e-12).value - dense_gen_eig(A, B)[0]))
    rows = [_row("eigensolver", "random pairs vs dense", worst, 1e-8)]
    m = generate(DomainSpec("half_disk", r=0.5), 0.1, 2.0)
    A, B = stiffness(m), mass(m, WeightKind.inv_r2())
    err = abs(min_gen_eig(A, B, tol=1e-12).value - dense_gen_eig(A.toarray(), B.toarray())[0])
    rows.append(_row("eigensolver", f"half disk n={A.n} vs dense", err, 1e-8))
    return rows


def run_suite(name: str = "all") -> List[dict]:
    if name == "all":
        return [r for s in SUITES for r in run_suite(s)]
    if name not in SUITES:
        raise ValueError(f"suite: unknown suite {name!r}")
    return globals()[name]()
