"""Closed-form barrier functions, the singular operator acting on them, and oracle constants.

Barrier family, for ``y1 > 0`` and ``0 < |y| < 1``::

    X_a(t)          = |log t|^a
    omega_bar_a(y)  = y1 |y|^(-N/2) X_a(|y|)
    omega_{a,K}(y)  = exp(K y1) omega_bar_a(y)

and the operator ``L_y = -Delta - (N^2/4)|y|^-2 + a(a-1)|y|^-2 X_{-2}(|y|)``,
which annihilates ``omega_bar_a``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma as _gamma

from .geometry import ChartError, FermiChart, chart_forward, chart_inverse, distance_to_surface, \
    half_ball_grid

A_SAMPLES = (-0.99, -0.9, -0.75, -0.6, -0.51)


@dataclass(frozen=True)
class BarrierParams:
    a: float
    K: float = 0.0
    N: int = 2

    @property
    def in_h1(self) -> bool:
        return self.a < -0.5


@dataclass(frozen=True)
class OperatorSpec:
    """Operator applied to a barrier.

    ``plain=True`` selects ``L_y``; otherwise
    ``-div(p grad) - (N^2/4) q |x|^-2 + lam * W`` with ``W = eta |x|^-2`` when
    ``eta`` is given and ``W = 1`` otherwise.
    """
    lam: float = 0.0
    p: Optional[Callable] = None
    q: Optional[Callable] = None
    eta: Optional[Callable] = None
    plain: bool = False


def x_weight(a: float, t):
    t = np.asarray(t, dtype=float)
    if np.any((t <= 0) | (t >= 1)):
        raise ValueError("X_a(t) needs 0 < t < 1")
    return np.abs(np.log(t)) ** a


def _check_half_ball(y, N):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != N:
        raise ValueError(f"expected points of dimension {N}")
    r = np.linalg.norm(y, axis=-1)
    if np.any(y[..., 0] <= 0) or np.any((r <= 0) | (r >= 1)):
        raise ValueError("barrier evaluation needs y1 > 0 and 0 < |y| < 1")
    return y, r


def _omega_raw(a, K, N, y):
    # no domain checks; used on finite-difference stencils
    r = np.linalg.norm(y, axis=-1)
    return np.exp(K * y[..., 0]) * y[..., 0] * r ** (-N / 2) * np.abs(np.log(r)) ** a


def omega_bar(a: float, N: int, y):
    y, r = _check_half_ball(y, N)
    return y[..., 0] * r ** (-N / 2) * np.abs(np.log(r)) ** a


def omega(a: float, K: float, N: int, y):
    y, _ = _check_half_ball(y, N)
    return np.exp(K * y[..., 0]) * omega_bar(a, N, y)


def fd_laplacian(f: Callable, y: np.ndarray, h) -> np.ndarray:
    """Centred (2N+1)-point Laplacian; ``h`` may vary per point."""
    y = np.asarray(y, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), y.shape[:-1])
    f0 = f(y)
    acc = -2.0 * y.shape[-1] * f0
    for i in range(y.shape[-1]):
        e = np.zeros(y.shape[-1])
        e[i] = 1.0
        step = h[..., None] * e
        acc = acc + f(y + step) + f(y - step)
    return acc / h ** 2


def _stencil_ok(y, h):
    r = np.linalg.norm(y, axis=-1)
    return (y[..., 0] > 2 * h) & (r > 2 * h) & (r + 2 * h < 1)


def ly_residual_fd(a: float, N: int, y, h) -> np.ndarray:
    """Finite-difference value of ``L_y omega_bar_a`` (exactly zero in the continuum).

    ``h`` is relative: the stencil step at ``y`` is ``h * |y|``.
    """
    y, r = _check_half_ball(y, N)
    h = h * r
    if not np.all(_stencil_ok(y, h)):
        raise ValueError("stencil leaves {y1 > 0, 0 < |y| < 1}")
    f = lambda z: _omega_raw(a, 0.0, N, z)
    w = f(y)
    lap = fd_laplacian(f, y, h)
    return -lap - (N * N / 4) * w / r ** 2 + a * (a - 1) * w / (r ** 2 * np.log(r) ** 2)


def lyoak_rhs(a: float, K: float, N: int, y) -> np.ndarray:
    """``L_y omega_{a,K}`` in closed form."""
    y, r = _check_half_ball(y, N)
    w = omega(a, K, N, y)
    y1 = y[..., 0]
    xm1 = 1.0 / np.abs(np.log(r))
    return -(2 * K / y1) * w + 2 * K * (N / 2 + a * xm1) * (y1 / r ** 2) * w - K * K * w


def lyoak_residual_fd(a: float, K: float, N: int, y, h) -> np.ndarray:
    """Finite-difference ``L_y omega_{a,K}`` minus :func:`lyoak_rhs` (relative step ``h``)."""
    y, r = _check_half_ball(y, N)
    h = h * r
    if not np.all(_stencil_ok(y, h)):
        raise ValueError("stencil leaves {y1 > 0, 0 < |y| < 1}")
    f = lambda z: _omega_raw(a, K, N, z)
    w = f(y)
    lap = fd_laplacian(f, y, h)
    ly = -lap - (N * N / 4) * w / r ** 2 + a * (a - 1) * w / (r ** 2 * np.log(r) ** 2)
    return ly - lyoak_rhs(a, K, N, y)


def observed_order(residual: Callable, h: float) -> float:
    """log2 of the residual ratio under step halving."""
    r1 = abs(float(residual(h)))
    r2 = abs(float(residual(h / 2)))
    return math.log2(r1 / r2)


@dataclass
class ScanResult:
    max_ratio: float
    admissible: bool
    argmax: np.ndarray
    n_points: int
    n_skipped: int
    violations: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))


def _apply_operator(op: OperatorSpec, params: BarrierParams, w: Callable, x: np.ndarray,
                    h: np.ndarray) -> np.ndarray:
    N = params.N
    r = np.linalg.norm(x, axis=-1)
    w0 = w(x)
    if op.plain or op.p is None:
        div = fd_laplacian(w, x, h)
    else:
        div = np.zeros_like(w0)
        for i in range(N):
            e = np.zeros(N)
            e[i] = 1.0
            s = h[..., None] * e
            p_plus = op.p(x + 0.5 * s)
            p_minus = op.p(x - 0.5 * s)
            div = div + (p_plus * (w(x + s) - w0) - p_minus * (w0 - w(x - s))) / h ** 2
    q = 1.0 if (op.plain or op.q is None) else op.q(x)
    out = -div - (N * N / 4) * q * w0 / r ** 2
    if op.plain:
        a = params.a
        out = out + a * (a - 1) * w0 / (r ** 2 * np.log(r) ** 2)
        return out + op.lam * w0
    weight = 1.0 if op.eta is None else op.eta(x) / r ** 2
    return out + op.lam * weight * w0


def barrier_sign_scan(params: BarrierParams, op: OperatorSpec, chart: FermiChart, r: float,
                      grid: int = 64, tol: float = 1e-6, rel_step: float = 1e-3) -> ScanResult:
    """Sup of ``(L w)/w`` over a polar grid of the chart half ball, ``w = omega_{a,K} o F^-1``."""
    if chart.dim != 2 or params.N != 2:
        raise NotImplementedError("the sign scan is two-dimensional")
    if chart.kind != "plane" and r >= chart.validity_radius:
        raise ChartError("r exceeds the chart validity range")
    y = half_ball_grid(r, grid)
    y = y[y[:, 0] > 0]
    x = chart_forward(chart, y)
    rx = np.linalg.norm(x, axis=-1)
    h = rel_step * rx
    d = distance_to_surface(chart, x)
    ok = (d > 2 * h) & (rx > 2 * h) & (rx + 2 * h < 1)
    x, h = x[ok], h[ok]

    def w(z):
        yy = chart_inverse(chart, z)
        return _omega_raw(params.a, params.K, params.N, yy)

    w0 = w(x)
    if np.any(w0 <= 0):
        raise ChartError("non-positive barrier value inside the domain")
    ratio = _apply_operator(op, params, w, x, h) / w0
    i = int(np.argmax(ratio))
    m = float(ratio[i])
    return ScanResult(max_ratio=m, admissible=m <= tol, argmax=x[i], n_points=int(ok.sum()),
                      n_skipped=int((~ok).sum()), violations=x[ratio > tol])


def _sphere_area(k: int) -> float:
    """Surface measure of the unit sphere S^k (S^0 has two points)."""
    return 2 * math.pi ** ((k + 1) / 2) / _gamma((k + 1) / 2)


def barrier_norm_divergence(a: float, N: int, r_sequence, K: Optional[float] = None,
                            rtol: float = 1e-6, max_doublings: int = 12) -> np.ndarray:
    """``int_{B_r^+} omega_{a,K}^2 / |y|^2 dy`` for each r (default ``K = N - 1``).

    Polar coordinates with ``s = -log|y|``: the radial integrand is
    ``s^(2a) A(e^-s)`` where ``A`` is the angular integral.  The constant part
    ``A(0)`` is integrated exactly, the exponentially decaying remainder with
    Gauss-Legendre panels on a doubling grid.
    """
    if not -1 < a < -0.5:
        raise ValueError("a must lie in (-1, -1/2)")
    K = float(N - 1) if K is None else float(K)
    rs = np.asarray(r_sequence, dtype=float)
    if np.any((rs <= 0) | (rs >= math.exp(-1))):
        raise ValueError("radii must lie in (0, 1/e)")
    surf = _sphere_area(N - 2)

    def angular(t, n_ang):
        th, wt = np.polynomial.legendre.leggauss(n_ang)
        th = (th + 1) * math.pi / 4
        wt = wt * math.pi / 4
        c = np.cos(th)
        base = c ** 2 * np.sin(th) ** (N - 2)
        A0 = surf * float(np.sum(wt * base))
        dA = surf * np.sum(wt * base * np.expm1(2 * K * np.outer(t, c)), axis=1)
        return A0, dA

    def integrate(s0, n):
        gx, gw = np.polynomial.legendre.leggauss(8)
        span = 45.0
        edges = s0 + span * np.linspace(0, 1, n + 1)
        lo, hi = edges[:-1, None], edges[1:, None]
        s = (0.5 * (hi - lo) * gx + 0.5 * (hi + lo)).ravel()
        ws = (0.5 * (hi - lo) * gw).ravel()
        A0, dA = angular(np.exp(-s), 8 + n // 2)
        return A0 * s0 ** (2 * a + 1) / abs(2 * a + 1) + float(np.sum(ws * s ** (2 * a) * dA))

    out = []
    for r in rs:
        s0 = -math.log(r)
        n = 16
        prev = integrate(s0, n)
        for _ in range(max_doublings):
            n *= 2
            cur = integrate(s0, n)
            if abs(cur - prev) <= rtol * abs(cur):
                break
            prev = cur
        else:
            raise ArithmeticError("barrier norm quadrature did not converge")
        out.append(cur)
    return np.array(out)


def sector_hardy_constant(theta: float) -> float:
    """Sharp Hardy constant (pi/theta)^2 of a planar sector with vertex at the singularity."""
    if not 0 < theta <= 2 * math.pi:
        raise ValueError("theta must lie in (0, 2*pi]")
    return (math.pi / theta) ** 2


def halfspace_constant(N: int, k: int = 0) -> float:
    """Flat-case constant (N-k)^2/4 for a singular set of dimension k on the boundary."""
    if not 0 <= k <= N - 1:
        raise ValueError("k must satisfy 0 <= k <= N-1")
    return (N - k) ** 2 / 4
