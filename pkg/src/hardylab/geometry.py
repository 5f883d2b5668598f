"""Model boundary surfaces, their Fermi normal-coordinate charts, and 2D domain specs.

Conventions: the surface passes through the origin and its unit normal at the
origin, pointing into the region ``U``, is ``E1``.  Normal coordinates are
``y = (y1, y')`` with ``y1`` the distance along the normal and ``y'`` geodesic
coordinates on the surface.

* ``plane``            U = {x1 > 0}, chart is the identity.
* ``sphere_exterior``  U = R^N minus the closed ball of radius R centred at -R E1.
* ``sphere_interior``  U = the open ball of radius R centred at R E1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

CHART_KINDS = ("plane", "sphere_exterior", "sphere_interior")
DOMAIN_KINDS = ("half_disk", "sector", "fermi_half_ball", "exterior_cap", "polygon")


class ChartError(ValueError):
    """Input outside the validity range of a chart."""


@dataclass(frozen=True)
class FermiChart:
    kind: str = "plane"
    radius: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if self.kind not in CHART_KINDS:
            raise ValueError(f"chart kind must be one of {CHART_KINDS}, got {self.kind!r}")
        if self.dim < 2:
            raise ValueError("chart dimension must be >= 2")
        if not self.radius > 0:
            raise ValueError("chart radius must be positive")

    @property
    def center(self) -> np.ndarray:
        c = np.zeros(self.dim)
        if self.kind == "sphere_exterior":
            c[0] = -self.radius
        elif self.kind == "sphere_interior":
            c[0] = self.radius
        return c

    @property
    def validity_radius(self) -> float:
        """Conservative radius of the region where the chart is used."""
        return math.inf if self.kind == "plane" else self.radius / 2

    def to_dict(self) -> dict:
        return {"kind": self.kind, "radius": self.radius, "dim": self.dim}

    @classmethod
    def from_dict(cls, d: dict) -> "FermiChart":
        unknown = set(d) - {"kind", "radius", "dim"}
        if unknown:
            raise ValueError(f"unknown chart keys: {sorted(unknown)}")
        return cls(kind=d.get("kind", "plane"), radius=float(d.get("radius", 1.0)),
                   dim=int(d.get("dim", 2)))


def _as_points(a, dim):
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != dim:
        raise ValueError(f"expected points with last axis {dim}, got shape {a.shape}")
    return a


def chart_forward(chart: FermiChart, y) -> np.ndarray:
    """Map normal coordinates ``y`` (last axis = dimension) to ambient points."""
    y = _as_points(y, chart.dim)
    if np.any(y[..., 0] < 0):
        raise ChartError("normal coordinate y1 must be >= 0")
    if chart.kind == "plane":
        return y.copy()
    R = chart.radius
    yt = y[..., 1:]
    s = np.linalg.norm(yt, axis=-1)
    # injectivity: geodesic distance below half the great circle, and inside the centre
    if np.any(s >= math.pi * R) or (chart.kind == "sphere_interior" and np.any(y[..., 0] >= R)):
        raise ChartError("y leaves the injectivity range of the chart")
    # unit tangent direction; arbitrary where s == 0 since sin(0) kills it
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(s[..., None] > 0, yt / np.where(s > 0, s, 1.0)[..., None], 0.0)
    ang = s / R
    x = np.empty_like(y)
    if chart.kind == "sphere_exterior":
        rad = R + y[..., 0]
        # (R + y1) cos - R without cancellation for tiny y
        x[..., 0] = y[..., 0] * np.cos(ang) - 2 * R * np.sin(0.5 * ang) ** 2
    else:
        rad = R - y[..., 0]
        x[..., 0] = y[..., 0] * np.cos(ang) + 2 * R * np.sin(0.5 * ang) ** 2
    x[..., 1:] = (rad * np.sin(ang))[..., None] * v
    # the origin must map to the origin exactly
    x[..., 1:][s == 0] = 0.0
    return x


def chart_inverse(chart: FermiChart, x) -> np.ndarray:
    """Closed-form inverse of :func:`chart_forward` (radial distance + angle)."""
    x = _as_points(x, chart.dim)
    if chart.kind == "plane":
        return x.copy()
    R = chart.radius
    z = x - chart.center
    y1 = _signed_gap(chart, x)
    cos_part = z[..., 0] if chart.kind == "sphere_exterior" else -z[..., 0]
    if np.any(np.abs(y1) >= R / 2):
        raise ChartError("point outside the tubular neighbourhood of the surface")
    zt = z[..., 1:]
    st = np.linalg.norm(zt, axis=-1)
    ang = np.arctan2(st, cos_part)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(st[..., None] > 0, zt / np.where(st > 0, st, 1.0)[..., None], 0.0)
    y = np.empty_like(x)
    y[..., 0] = y1
    y[..., 1:] = (R * ang)[..., None] * v
    return y


def chart_jacobian(chart: FermiChart, y) -> np.ndarray:
    """Derivative dF/dy, shape ``(..., N, N)``; analytic in 2D, central differences otherwise."""
    y = _as_points(y, chart.dim)
    n = chart.dim
    if chart.kind == "plane":
        return np.broadcast_to(np.eye(n), y.shape[:-1] + (n, n)).copy()
    if n == 2:
        R = chart.radius
        ang = y[..., 1] / R
        J = np.empty(y.shape[:-1] + (2, 2))
        if chart.kind == "sphere_exterior":
            rad = R + y[..., 0]
            J[..., 0, 0] = np.cos(ang)
            J[..., 1, 0] = np.sin(ang)
            J[..., 0, 1] = -rad * np.sin(ang) / R
            J[..., 1, 1] = rad * np.cos(ang) / R
        else:
            rad = R - y[..., 0]
            J[..., 0, 0] = np.cos(ang)
            J[..., 1, 0] = -np.sin(ang)
            J[..., 0, 1] = rad * np.sin(ang) / R
            J[..., 1, 1] = rad * np.cos(ang) / R
        return J
    eps = 1e-6
    J = np.empty(y.shape[:-1] + (n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = eps
        lo = y - e
        if k == 0:
            lo = np.where(lo[..., :1] < 0, y, lo)
        J[..., :, k] = (chart_forward(chart, y + e) - chart_forward(chart, lo)) / (
            (y + e)[..., k:k + 1] - lo[..., k:k + 1])
    return J


def distance_to_surface(chart: FermiChart, x) -> np.ndarray:
    """Signed distance to the surface, positive inside ``U``.

    A negative value means the point lies outside ``U``.
    """
    x = _as_points(x, chart.dim)
    if chart.kind == "plane":
        return x[..., 0].copy()
    return _signed_gap(chart, x)


def _signed_gap(chart: FermiChart, x: np.ndarray) -> np.ndarray:
    # rho - R (or R - rho) as a difference of squares; exact near the origin
    R = chart.radius
    rho = np.linalg.norm(x - chart.center, axis=-1)
    sq = np.sum(x * x, axis=-1)
    if chart.kind == "sphere_exterior":
        return (sq + 2 * R * x[..., 0]) / (rho + R)
    return (2 * R * x[..., 0] - sq) / (rho + R)


def distance_gradient(chart: FermiChart, x) -> np.ndarray:
    x = _as_points(x, chart.dim)
    if chart.kind == "plane":
        g = np.zeros_like(x)
        g[..., 0] = 1.0
        return g
    z = x - chart.center
    g = z / np.linalg.norm(z, axis=-1)[..., None]
    return g if chart.kind == "sphere_exterior" else -g


def mean_curvature_term(chart: FermiChart, x) -> np.ndarray:
    """Laplacian of the distance function, ``h = Delta d``."""
    d = distance_to_surface(chart, x)
    n1 = chart.dim - 1
    if chart.kind == "plane":
        return np.zeros_like(d)
    R = chart.radius
    if chart.kind == "sphere_exterior":
        return n1 / (R + d)
    if np.any(d >= R):
        raise ChartError("distance reaches the sphere centre")
    return -n1 / (R - d)


def half_ball_grid(r: float, n: int, dim: int = 2) -> np.ndarray:
    """Polar sample grid of the half disk ``{|y| <= r, y1 >= 0}`` (2D only), origin excluded."""
    if dim != 2:
        raise NotImplementedError("sample grids are two-dimensional")
    rho = r * np.arange(1, n + 1) / n
    phi = -math.pi / 2 + math.pi * np.arange(n + 1) / n
    P, F = np.meshgrid(rho, phi, indexing="ij")
    return np.stack([P * np.cos(F), P * np.sin(F)], axis=-1).reshape(-1, 2)


def _gradient_fd(p: Callable, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    g = np.empty_like(x)
    for k in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[k] = step
        g[..., k] = (p(x + e) - p(x - e)) / (2 * step)
    return g


def drift_constant(chart: FermiChart, p: Callable, r: float, mode: str = "min",
                   grad_p: Optional[Callable] = None, n0: int = 16, tol: float = 1e-3,
                   max_n: int = 2048) -> float:
    """Half the min (or max) of ``-grad p . grad d - h`` over the chart half ball of radius ``r``.

    The sample grid doubles until the extremum changes by less than ``tol``.
    """
    if mode not in ("min", "max"):
        raise ValueError("mode must be 'min' or 'max'")
    if chart.kind != "plane" and r >= chart.radius:
        raise ChartError("r exceeds the chart validity range")
    ext = np.min if mode == "min" else np.max

    def evaluate(n):
        y = half_ball_grid(r, n, chart.dim)
        x = chart_forward(chart, y)
        gp = grad_p(x) if grad_p is not None else _gradient_fd(p, x)
        val = -np.sum(gp * distance_gradient(chart, x), axis=-1) - mean_curvature_term(chart, x)
        return 0.5 * float(ext(val))

    n = n0
    prev = evaluate(n)
    while n < max_n:
        n *= 2
        cur = evaluate(n)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    return prev


@dataclass(frozen=True)
class DomainSpec:
    """2D domain with the origin on its boundary.

    ``half_disk``       B_r(0) intersected with {x1 > 0}
    ``sector``          0 < |x| < r, polar angle in (0, theta)
    ``fermi_half_ball`` image of the half disk of radius r under a Fermi chart
    ``exterior_cap``    B_r(0) minus the closed disk of radius ``hole_radius`` centred at (-hole_radius, 0)
    ``polygon``         closed polygon through the origin (vertex list, counter-clockwise)
    """
    kind: str
    r: float = 0.5
    theta: float = math.pi
    hole_radius: float = 1.0
    chart: FermiChart = field(default_factory=FermiChart)
    vertices: tuple = ()

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"kind: domain kind must be one of {DOMAIN_KINDS}, got {self.kind!r}")
        if self.kind == "polygon":
            if len(self.vertices) < 3:
                raise ValueError("vertices: a polygon needs at least 3 vertices")
            return
        if not self.r > 0:
            raise ValueError("r: radius must be positive")
        if self.kind == "sector" and not 0 < self.theta <= 2 * math.pi:
            raise ValueError("theta: opening angle must lie in (0, 2*pi]")
        if self.kind == "exterior_cap" and not self.hole_radius > 0:
            raise ValueError("hole_radius: must be positive")
        if self.kind == "fermi_half_ball" and self.chart.kind != "plane" \
                and self.r >= self.chart.validity_radius:
            raise ValueError("r: exceeds the chart validity radius")

    @property
    def diameter(self) -> float:
        if self.kind == "half_disk":
            return 2 * self.r
        if self.kind == "sector":
            if self.theta < math.pi:
                return max(self.r, 2 * self.r * math.sin(self.theta / 2))
            return 2 * self.r
        if self.kind == "fermi_half_ball":
            return 2 * self.r * (1 + (self.r / self.chart.radius if self.chart.kind == "sphere_exterior" else 0.0))
        if self.kind == "exterior_cap":
            return 2 * self.r
        v = np.asarray(self.vertices, dtype=float)
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "polygon":
            d["vertices"] = [list(map(float, v)) for v in self.vertices]
            return d
        d["r"] = self.r
        if self.kind == "sector":
            d["theta"] = self.theta
        if self.kind == "exterior_cap":
            d["hole_radius"] = self.hole_radius
        if self.kind == "fermi_half_ball":
            d["chart"] = self.chart.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        allowed = {"kind", "r", "theta", "hole_radius", "chart", "vertices"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown domain keys: {sorted(unknown)}")
        if "kind" not in d:
            raise ValueError("kind: missing domain kind")
        chart = d.get("chart", {})
        chart = chart if isinstance(chart, FermiChart) else FermiChart.from_dict(chart)
        return cls(kind=d["kind"], r=float(d.get("r", 0.5)), theta=float(d.get("theta", math.pi)),
                   hole_radius=float(d.get("hole_radius", 1.0)), chart=chart,
                   vertices=tuple(tuple(map(float, v)) for v in d.get("vertices", ())))

    def surface_chart(self) -> FermiChart:
        """Chart whose surface bounds the domain near the origin."""
        if self.kind == "fermi_half_ball":
            return self.chart
        if self.kind == "exterior_cap":
            return FermiChart("sphere_exterior", self.hole_radius)
        return FermiChart("plane")


def polygon_area(vertices: Sequence) -> float:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
