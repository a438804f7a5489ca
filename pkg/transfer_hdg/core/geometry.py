"""
Analytic boundary and interface curves.

Every curve exposes an implicit value that is negative inside and positive
outside, its gradient, a closest-point projection and a ray intersection.
Domains are described by a DomainSpec: a tuple of boundary pieces (each one a
curve, the side of the curve the domain lies on and a Dirichlet/Neumann
rule), an optional interface curve and one conductivity tensor per region.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from transfer_hdg.core.errors import (
    DegenerateGradientError,
    NoIntersectionError,
    ParameterDomainError,
    ProjectionError,
)

logger = logging.getLogger(__name__)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

ON_CURVE_TOL = 1e-13
PROJECTION_SEEDS = 256
PROJECTION_MAX_ITER = 100
PROJECTION_TOL = 1e-12
DENSE_TRACE = 4096
AIRFOIL_SEGMENTS = 4096


def _as_points(x) -> Tuple[np.ndarray, bool]:
    """Return points as an (n, 2) float array and whether a single point was given."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr.reshape(1, 2), True
    return arr.reshape(-1, 2), False


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


class Curve:
    """Base class for closed curves with an implicit description."""

    kind = "curve"

    # -- implicit description -------------------------------------------------
    def value(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def trace(self, count: int) -> np.ndarray:
        """Points on the curve, counterclockwise, not necessarily equispaced."""
        raise NotImplementedError

    def distance_estimate(self, points: np.ndarray) -> np.ndarray:
        """First-order distance |F| / |grad F|; exact for signed-distance curves."""
        grad = self.gradient(points)
        return np.abs(self.value(points)) / np.maximum(np.linalg.norm(grad, axis=1), 1e-300)

    def normals(self, points: np.ndarray) -> np.ndarray:
        """grad F / |grad F| at arbitrary points (no on-curve requirement)."""
        grad = self.gradient(points)
        return grad / np.linalg.norm(grad, axis=1)[:, None]

    # -- derived geometry -------------------------------------------------------
    @cached_property
    def dense_trace(self) -> np.ndarray:
        return self.trace(DENSE_TRACE)

    @cached_property
    def projection_seeds(self) -> np.ndarray:
        return self.trace(PROJECTION_SEEDS)

    @cached_property
    def perimeter(self) -> float:
        closed = np.vstack([self.dense_trace, self.dense_trace[:1]])
        return float(np.sum(np.linalg.norm(np.diff(closed, axis=0), axis=1)))

    def bounding_box(self) -> Tuple[float, float, float, float]:
        pts = self.dense_trace
        return (float(pts[:, 0].min()), float(pts[:, 0].max()),
                float(pts[:, 1].min()), float(pts[:, 1].max()))

    def interior_point(self) -> np.ndarray:
        """A point well inside the curve (used as a triangulator hole seed)."""
        x0, x1, y0, y1 = self.bounding_box()
        gx, gy = np.meshgrid(np.linspace(x0, x1, 41)[1:-1], np.linspace(y0, y1, 41)[1:-1])
        candidates = np.column_stack([gx.ravel(), gy.ravel()])
        values = self.value(candidates)
        return candidates[int(np.argmin(values))]

    def nodes(self, count: int) -> np.ndarray:
        """count points on the curve, equispaced in arc length up to projection."""
        closed = np.vstack([self.dense_trace, self.dense_trace[:1]])
        seglen = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        arclen = np.concatenate([[0.0], np.cumsum(seglen)])
        targets = np.arange(count) * arclen[-1] / count
        xs = np.interp(targets, arclen, closed[:, 0])
        ys = np.interp(targets, arclen, closed[:, 1])
        return np.array([self.project(p)[0] for p in np.column_stack([xs, ys])])

    # -- queries ----------------------------------------------------------------
    def project(self, x: np.ndarray) -> Tuple[np.ndarray, float]:
        """Closest point by damped Newton on the Lagrangian, seeded from samples."""
        x = np.asarray(x, dtype=float)
        seeds = self.projection_seeds
        order = np.argsort(np.linalg.norm(seeds - x, axis=1))
        best = None
        for seed in seeds[order[:3]]:
            candidate = self._newton_project(x, seed)
            dist = float(np.linalg.norm(candidate - x))
            if best is None or dist < best[1]:
                best = (candidate, dist)
        return best

    def _newton_project(self, x: np.ndarray, seed: np.ndarray) -> np.ndarray:
        y = seed.astype(float).copy()
        g = self.gradient(y[None])[0]
        lam = -float(np.dot(y - x, g)) / float(np.dot(g, g))
        scale = 1.0 + float(np.linalg.norm(x))

        def residual(y_, lam_):
            g_ = self.gradient(y_[None])[0]
            return np.concatenate([y_ - x + lam_ * g_, [self.value(y_[None])[0]]])

        r = residual(y, lam)
        for _ in range(PROJECTION_MAX_ITER):
            if np.linalg.norm(r) <= PROJECTION_TOL * scale:
                break
            g = self.gradient(y[None])[0]
            hess = self.hessian(y[None])[0]
            jac = np.zeros((3, 3))
            jac[:2, :2] = np.eye(2) + lam * hess
            jac[:2, 2] = g
            jac[2, :2] = g
            try:
                step = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError as exc:
                raise ProjectionError(f"Singular projection system near {tuple(y)}") from exc
            alpha = 1.0
            while True:
                y_new = y + alpha * step[:2]
                lam_new = lam + alpha * step[2]
                r_new = residual(y_new, lam_new)
                if np.linalg.norm(r_new) < np.linalg.norm(r) or alpha < 1e-4:
                    break
                alpha *= 0.5
            y, lam, r = y_new, lam_new, r_new
        else:
            raise ProjectionError(
                f"Closest-point projection of {tuple(x)} did not converge "
                f"in {PROJECTION_MAX_ITER} iterations"
            )
        # Polish onto F = 0 along the gradient
        for _ in range(3):
            g = self.gradient(y[None])[0]
            y = y - self.value(y[None])[0] * g / float(np.dot(g, g))
        return y

    def intersect_ray(self, x: np.ndarray, m: np.ndarray, t_max: float) -> np.ndarray:
        """Smallest t >= 0 with F(x + t m) = 0 by marching then Brent's method."""
        x = np.asarray(x, dtype=float)
        m = np.asarray(m, dtype=float)
        f0 = self.value(x[None])[0]
        if abs(f0) <= ON_CURVE_TOL:
            return x.copy()
        ts = np.linspace(0.0, t_max, 257)
        vals = self.value(x[None, :] + ts[:, None] * m[None, :])
        flips = np.nonzero(np.sign(vals[1:]) != np.sign(vals[0]))[0]
        if flips.size == 0:
            raise NoIntersectionError(x, m, t_max)
        i = int(flips[0]) + 1
        if vals[i] == 0.0:
            return x + ts[i] * m
        t = brentq(lambda s: self.value((x + s * m)[None])[0], ts[i - 1], ts[i],
                   xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        return x + t * m


@dataclass(frozen=True, eq=False)
class Circle(Curve):
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    kind = "circle"

    def __post_init__(self):
        if self.radius <= 0:
            raise ParameterDomainError(f"Circle radius must be positive, got {self.radius}")

    @property
    def _c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    def value(self, points):
        pts, _ = _as_points(points)
        return np.linalg.norm(pts - self._c, axis=1) - self.radius

    def gradient(self, points):
        pts, _ = _as_points(points)
        d = pts - self._c
        rho = np.linalg.norm(d, axis=1)
        out = np.zeros_like(d)
        ok = rho > 0
        out[ok] = d[ok] / rho[ok, None]
        return out

    def hessian(self, points):
        pts, _ = _as_points(points)
        d = pts - self._c
        rho = np.maximum(np.linalg.norm(d, axis=1), 1e-300)
        n = d / rho[:, None]
        return (np.eye(2)[None] - n[:, :, None] * n[:, None, :]) / rho[:, None, None]

    def distance_estimate(self, points):
        return np.abs(self.value(points))

    def trace(self, count):
        t = 2.0 * np.pi * np.arange(count) / count
        return self._c + self.radius * np.column_stack([np.cos(t), np.sin(t)])

    @cached_property
    def perimeter(self):
        return 2.0 * np.pi * self.radius

    def bounding_box(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    def interior_point(self):
        return self._c.copy()

    def nodes(self, count):
        return self.trace(count)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        d = x - self._c
        rho = float(np.linalg.norm(d))
        if rho == 0.0:
            return self._c + np.array([self.radius, 0.0]), self.radius
        return self._c + self.radius * d / rho, abs(rho - self.radius)

    def intersect_ray(self, x, m, t_max):
        x = np.asarray(x, dtype=float)
        m = np.asarray(m, dtype=float)
        d = x - self._c
        c0 = float(np.dot(d, d)) - self.radius ** 2
        if abs(np.sqrt(np.dot(d, d)) - self.radius) <= ON_CURVE_TOL:
            return x.copy()
        b = float(np.dot(m, d))
        disc = b * b - c0
        if disc < 0:
            raise NoIntersectionError(x, m, t_max)
        sq = np.sqrt(disc)
        roots = sorted(t for t in (-b - sq, -b + sq) if t >= 0)
        if not roots or roots[0] > t_max:
            raise NoIntersectionError(x, m, t_max)
        return x + roots[0] * m


@dataclass(frozen=True, eq=False)
class Ellipse(Curve):
    a: float = 1.0
    b: float = 1.0
    center: Tuple[float, float] = (0.0, 0.0)
    kind = "ellipse"

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ParameterDomainError(f"Ellipse semi-axes must be positive, got ({self.a}, {self.b})")

    def value(self, points):
        pts, _ = _as_points(points)
        x = (pts[:, 0] - self.center[0]) / self.a
        y = (pts[:, 1] - self.center[1]) / self.b
        return x * x + y * y - 1.0

    def gradient(self, points):
        pts, _ = _as_points(points)
        return np.column_stack([
            2.0 * (pts[:, 0] - self.center[0]) / self.a ** 2,
            2.0 * (pts[:, 1] - self.center[1]) / self.b ** 2,
        ])

    def hessian(self, points):
        pts, _ = _as_points(points)
        hess = np.zeros((pts.shape[0], 2, 2))
        hess[:, 0, 0] = 2.0 / self.a ** 2
        hess[:, 1, 1] = 2.0 / self.b ** 2
        return hess

    def trace(self, count):
        t = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([self.center[0] + self.a * np.cos(t),
                                self.center[1] + self.b * np.sin(t)])

    def bounding_box(self):
        cx, cy = self.center
        return (cx - self.a, cx + self.a, cy - self.b, cy + self.b)

    def interior_point(self):
        return np.asarray(self.center, dtype=float)

    def intersect_ray(self, x, m, t_max):
        x = np.asarray(x, dtype=float)
        m = np.asarray(m, dtype=float)
        if abs(self.value(x[None])[0]) <= ON_CURVE_TOL:
            return x.copy()
        scale = np.array([1.0 / self.a, 1.0 / self.b])
        d = (x - np.asarray(self.center)) * scale
        ms = m * scale
        qa = float(np.dot(ms, ms))
        qb = float(np.dot(ms, d))
        qc = float(np.dot(d, d)) - 1.0
        disc = qb * qb - qa * qc
        if disc < 0:
            raise NoIntersectionError(x, m, t_max)
        sq = np.sqrt(disc)
        roots = sorted(t for t in ((-qb - sq) / qa, (-qb + sq) / qa) if t >= 0)
        if not roots or roots[0] > t_max:
            raise NoIntersectionError(x, m, t_max)
        return x + roots[0] * m


@dataclass(frozen=True, eq=False)
class Kidney(Curve):
    """(2S - X)^2 - S + 0.1 = 0 with X = x + 0.5, S = X^2 + y^2."""

    kind = "kidney"

    def _parts(self, points):
        pts, _ = _as_points(points)
        X = pts[:, 0] + 0.5
        y = pts[:, 1]
        S = X * X + y * y
        A = 2.0 * S - X
        return X, y, S, A

    def value(self, points):
        X, y, S, A = self._parts(points)
        return A * A - S + 0.1

    def gradient(self, points):
        X, y, S, A = self._parts(points)
        return np.column_stack([2.0 * A * (4.0 * X - 1.0) - 2.0 * X, 8.0 * A * y - 2.0 * y])

    def hessian(self, points):
        X, y, S, A = self._parts(points)
        hess = np.empty((X.size, 2, 2))
        hess[:, 0, 0] = 2.0 * (4.0 * X - 1.0) ** 2 + 8.0 * A - 2.0
        hess[:, 0, 1] = hess[:, 1, 0] = 8.0 * y * (4.0 * X - 1.0)
        hess[:, 1, 1] = 32.0 * y * y + 8.0 * A - 2.0
        return hess

    @staticmethod
    def _radial_roots(cos_t: float) -> Tuple[float, float]:
        # 4 rho^4 - 4 c rho^3 + (c^2 - 1) rho^2 + 0.1 = 0 in polar coordinates about (-0.5, 0)
        roots = np.roots([4.0, -4.0 * cos_t, cos_t * cos_t - 1.0, 0.0, 0.1])
        roots = roots[roots.real > 0]
        pair = roots[np.argsort(np.abs(roots.imag))[:2]].real
        return float(pair.min()), float(pair.max())

    @cached_property
    def half_opening(self) -> float:
        """Largest polar angle about (-0.5, 0) reached by the curve."""
        def gap(theta):
            c = np.cos(theta)
            res = minimize_scalar(lambda r: 4 * r ** 4 - 4 * c * r ** 3 + (c * c - 1) * r * r + 0.1,
                                  bounds=(0.05, 1.5), method="bounded",
                                  options={"xatol": 1e-14})
            return res.fun
        return brentq(gap, 0.0, np.pi / 2, xtol=1e-15)

    def trace(self, count):
        half = max(count // 2, 4)
        t = np.linspace(-np.pi / 2, np.pi / 2, half + 1)
        thetas = self.half_opening * np.sin(t)
        inner = np.empty(thetas.size)
        outer = np.empty(thetas.size)
        for i, theta in enumerate(thetas):
            inner[i], outer[i] = self._radial_roots(np.cos(theta))
        rho = np.concatenate([outer, inner[-2:0:-1]])
        ang = np.concatenate([thetas, thetas[-2:0:-1]])
        return np.column_stack([-0.5 + rho * np.cos(ang), rho * np.sin(ang)])


@dataclass(frozen=True, eq=False)
class PolygonCurve(Curve):
    """Closed polygon; F is the signed distance (negative inside)."""

    vertices: Tuple[Tuple[float, float], ...] = ()
    kind = "polygon"

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[0] < 3:
            raise ParameterDomainError("A polygon needs at least three vertices")
        area = 0.5 * np.sum(verts[:, 0] * np.roll(verts[:, 1], -1) - np.roll(verts[:, 0], -1) * verts[:, 1])
        if area < 0:
            object.__setattr__(self, "vertices", tuple(map(tuple, verts[::-1])))

    @cached_property
    def _segments(self) -> Tuple[np.ndarray, np.ndarray]:
        a = np.asarray(self.vertices, dtype=float)
        return a, np.roll(a, -1, axis=0)

    def _nearest(self, pts):
        a, b = self._segments
        ab = b - a
        ap = pts[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("psk,sk->ps", ap, ab) / np.einsum("sk,sk->s", ab, ab)[None], 0.0, 1.0)
        closest = a[None] + t[:, :, None] * ab[None]
        dist = np.linalg.norm(pts[:, None, :] - closest, axis=2)
        seg = np.argmin(dist, axis=1)
        rows = np.arange(pts.shape[0])
        return closest[rows, seg], dist[rows, seg], seg

    def contains(self, points) -> np.ndarray:
        pts, _ = _as_points(points)
        a, b = self._segments
        px = pts[:, 0][:, None]
        py = pts[:, 1][:, None]
        cond = (a[None, :, 1] > py) != (b[None, :, 1] > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a[None, :, 0] + (py - a[None, :, 1]) * (b[None, :, 0] - a[None, :, 0]) / (b[None, :, 1] - a[None, :, 1])
        crossings = np.sum(cond & (px < xint), axis=1)
        return crossings % 2 == 1

    def _segment_normals(self) -> np.ndarray:
        a, b = self._segments
        d = b - a
        return np.column_stack([d[:, 1], -d[:, 0]]) / np.linalg.norm(d, axis=1)[:, None]

    def value(self, points):
        pts, _ = _as_points(points)
        _, dist, _ = self._nearest(pts)
        return np.where(self.contains(pts), -dist, dist)

    def gradient(self, points):
        pts, _ = _as_points(points)
        closest, dist, seg = self._nearest(pts)
        sign = np.where(self.contains(pts), -1.0, 1.0)
        out = self._segment_normals()[seg]
        far = dist > 1e-14
        out[far] = sign[far, None] * (pts[far] - closest[far]) / dist[far, None]
        return out

    def hessian(self, points):
        pts, _ = _as_points(points)
        return np.zeros((pts.shape[0], 2, 2))

    def distance_estimate(self, points):
        return np.abs(self.value(points))

    def trace(self, count):
        return self.nodes(count)

    @cached_property
    def perimeter(self):
        a, b = self._segments
        return float(np.sum(np.linalg.norm(b - a, axis=1)))

    def bounding_box(self):
        v = np.asarray(self.vertices)
        return (float(v[:, 0].min()), float(v[:, 0].max()), float(v[:, 1].min()), float(v[:, 1].max()))

    def nodes(self, count):
        a, b = self._segments
        lengths = np.linalg.norm(b - a, axis=1)
        per_segment = np.maximum(1, np.round(count * lengths / lengths.sum()).astype(int))
        out = []
        for start, end, n in zip(a, b, per_segment):
            s = np.arange(n) / n
            out.append(start[None] + s[:, None] * (end - start)[None])
        return np.vstack(out)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        closest, dist, _ = self._nearest(x[None])
        return closest[0], float(dist[0])

    def intersect_ray(self, x, m, t_max):
        x = np.asarray(x, dtype=float)
        m = np.asarray(m, dtype=float)
        if abs(self.value(x[None])[0]) <= ON_CURVE_TOL:
            return x.copy()
        a, b = self._segments
        d = b - a
        denom = m[0] * d[:, 1] - m[1] * d[:, 0]
        ok = np.abs(denom) > 1e-300
        w = a - x
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (w[:, 0] * d[:, 1] - w[:, 1] * d[:, 0]) / denom
            s = (w[:, 0] * m[1] - w[:, 1] * m[0]) / denom
        hit = ok & (t >= 0) & (s >= -1e-14) & (s <= 1 + 1e-14) & (t <= t_max)
        if not np.any(hit):
            raise NoIntersectionError(x, m, t_max)
        return x + float(np.min(t[hit])) * m


@dataclass(frozen=True, eq=False)
class JoukowskyAirfoil(Curve):
    """Image of the circle |z - s| = R under J(z) = z + lambda^2 / z."""

    R: float = 0.1605
    s1: float = 0.01
    s2: float = 0.01
    kind = "airfoil"

    def __post_init__(self):
        offset = float(np.hypot(self.s1, self.s2))
        if offset <= 0 or self.R <= offset:
            raise ParameterDomainError(
                f"Joukowsky airfoil needs R > sqrt(s1^2 + s2^2) > 0 (R={self.R}, offset={offset})"
            )

    @property
    def lam(self) -> float:
        return self.R - float(np.hypot(self.s1, self.s2))

    @property
    def shift(self) -> complex:
        return complex(self.s1, self.s2)

    def joukowsky(self, z):
        return z + self.lam ** 2 / z

    def preimage(self, w):
        """Root of z^2 - w z + lambda^2 = 0 with |z| >= lambda."""
        w = np.asarray(w, dtype=complex)
        root = np.sqrt(w * w - 4.0 * self.lam ** 2)
        z1 = 0.5 * (w + root)
        z2 = 0.5 * (w - root)
        return np.where(np.abs(z1) >= np.abs(z2), z1, z2)

    def point(self, theta) -> np.ndarray:
        w = self.joukowsky(self.shift + self.R * np.exp(1j * np.asarray(theta, dtype=float)))
        return np.stack([np.real(w), np.imag(w)], axis=-1)

    def tangent(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        z = self.shift + self.R * np.exp(1j * theta)
        dw = (1.0 - self.lam ** 2 / z ** 2) * 1j * self.R * np.exp(1j * theta)
        return np.stack([np.real(dw), np.imag(dw)], axis=-1)

    def second_derivative(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        dz = 1j * self.R * np.exp(1j * theta)
        z = self.shift + self.R * np.exp(1j * theta)
        d2w = 2.0 * self.lam ** 2 / z ** 3 * dz ** 2 + (1.0 - self.lam ** 2 / z ** 2) * 1j * dz
        return np.stack([np.real(d2w), np.imag(d2w)], axis=-1)

    @cached_property
    def _theta_grid(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(AIRFOIL_SEGMENTS) / AIRFOIL_SEGMENTS

    @cached_property
    def polygon(self) -> PolygonCurve:
        return PolygonCurve(tuple(map(tuple, self.point(self._theta_grid))))

    def trace(self, count):
        return self.point(2.0 * np.pi * np.arange(count) / count)

    def interior_point(self):
        return self.polygon.interior_point()

    def _closest_parameter(self, x: np.ndarray) -> float:
        verts = self.point(self._theta_grid)
        near = np.argsort(np.linalg.norm(verts - x, axis=1))[:4]
        step = 2.0 * np.pi / AIRFOIL_SEGMENTS
        best = None
        for i in near:
            th0 = self._theta_grid[i]
            res = minimize_scalar(lambda t: float(np.sum((self.point(t) - x) ** 2)),
                                  bounds=(th0 - 2 * step, th0 + 2 * step), method="bounded",
                                  options={"xatol": 1e-14})
            if best is None or res.fun < best[1]:
                best = (float(res.x), float(res.fun))
        theta = best[0]
        # Newton on (J(theta) - x) . J'(theta) = 0; the bounded search stops near sqrt(eps)
        for _ in range(4):
            diff = self.point(theta) - x
            t1 = self.tangent(theta)
            slope = float(np.dot(t1, t1) + np.dot(diff, self.second_derivative(theta)))
            if slope <= 0:
                break
            step = float(np.dot(diff, t1)) / slope
            theta -= step
            if abs(step) < 1e-15:
                break
        return theta

    def value(self, points):
        pts, _ = _as_points(points)
        inside = self.polygon.contains(pts)
        dist = np.array([np.linalg.norm(self.point(self._closest_parameter(p)) - p) for p in pts])
        return np.where(inside, -dist, dist)

    def distance_estimate(self, points):
        return np.abs(self.value(points))

    def _parametric_normal(self, theta: float) -> np.ndarray:
        t = self.tangent(theta)
        norm = float(np.linalg.norm(t))
        if norm < 1e-12:
            raise DegenerateGradientError(f"Airfoil tangent vanishes at theta={theta:.12g}")
        return np.array([t[1], -t[0]]) / norm

    def gradient(self, points):
        pts, _ = _as_points(points)
        out = np.empty_like(pts)
        for i, p in enumerate(pts):
            theta = self._closest_parameter(p)
            diff = p - self.point(theta)
            dist = float(np.linalg.norm(diff))
            if dist > 1e-12:
                sign = -1.0 if self.polygon.contains(p[None])[0] else 1.0
                out[i] = sign * diff / dist
            else:
                out[i] = self._parametric_normal(theta)
        return out

    def hessian(self, points):
        pts, _ = _as_points(points)
        return np.zeros((pts.shape[0], 2, 2))

    def project(self, x):
        x = np.asarray(x, dtype=float)
        xbar = self.point(self._closest_parameter(x))
        return xbar, float(np.linalg.norm(xbar - x))

    def intersect_ray(self, x, m, t_max):
        x = np.asarray(x, dtype=float)
        m = np.asarray(m, dtype=float)
        if abs(self.value(x[None])[0]) <= ON_CURVE_TOL:
            return x.copy()
        # Polygon hit, then Newton on J(theta) = x + t m
        guess = self.polygon.intersect_ray(x, m, 1.05 * t_max + 1e-3)
        t = float(np.dot(guess - x, m))
        theta = self._closest_parameter(guess)
        for _ in range(50):
            g = self.point(theta) - x - t * m
            if np.linalg.norm(g) < 1e-15:
                break
            jac = np.column_stack([self.tangent(theta), -m])
            try:
                dtheta, dt = np.linalg.solve(jac, -g)
            except np.linalg.LinAlgError as exc:
                raise NoIntersectionError(x, m, t_max) from exc
            theta += dtheta
            t += dt
        if t < 0 or t > t_max:
            raise NoIntersectionError(x, m, t_max)
        return x + t * m


# ---------------------------------------------------------------------------
# Module-level operations


def implicit_value(curve: Curve, x) -> Union[float, np.ndarray]:
    """Signed implicit value: negative inside, zero on the curve, positive outside."""
    pts, single = _as_points(x)
    vals = curve.value(pts)
    return float(vals[0]) if single else vals


def outward_normal(curve: Curve, xbar) -> np.ndarray:
    """Unit normal pointing away from the inside of the curve at an on-curve point."""
    xbar = np.asarray(xbar, dtype=float)
    if isinstance(curve, JoukowskyAirfoil):
        theta = curve._closest_parameter(xbar)
        return curve._parametric_normal(theta)
    grad = curve.gradient(xbar[None])[0]
    norm = float(np.linalg.norm(grad))
    if norm < 1e-12:
        raise DegenerateGradientError(f"Gradient vanishes at {tuple(xbar)}")
    return grad / norm


def closest_point(curve: Curve, x) -> Tuple[np.ndarray, float]:
    """Return (xbar, distance) with xbar the point of the curve nearest to x."""
    return curve.project(np.asarray(x, dtype=float))


def ray_intersection(curve: Curve, x, m, t_max: float = np.inf) -> np.ndarray:
    """First point of the curve on the ray x + t m, t >= 0."""
    m = _unit(np.asarray(m, dtype=float))
    if not np.isfinite(t_max):
        x0, x1, y0, y1 = curve.bounding_box()
        t_max = np.linalg.norm(np.asarray(x, dtype=float) - [0.5 * (x0 + x1), 0.5 * (y0 + y1)]) \
            + np.hypot(x1 - x0, y1 - y0)
    return curve.intersect_ray(np.asarray(x, dtype=float), m, float(t_max))


def nearest_normal_hit(curve: Curve, x, n, t_max: float) -> np.ndarray:
    """Nearest curve point on the line x + t n, searching both directions up to t_max."""
    x = np.asarray(x, dtype=float)
    n = _unit(np.asarray(n, dtype=float))
    hits = []
    for direction in (n, -n):
        try:
            hits.append(curve.intersect_ray(x, direction, t_max))
        except NoIntersectionError:
            continue
    if not hits:
        raise NoIntersectionError(x, n, t_max)
    return min(hits, key=lambda p: float(np.linalg.norm(p - x)))


def joukowsky_airfoil(R: float, s1: float, s2: float) -> JoukowskyAirfoil:
    """Airfoil obtained from the circle of radius R centred at (s1, s2)."""
    return JoukowskyAirfoil(R=R, s1=s1, s2=s2)


# ---------------------------------------------------------------------------
# Domains

Condition = Union[str, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class BoundaryPiece:
    """One closed component of the true boundary.

    Args:
        curve: the analytic curve
        domain_inside: True if the domain lies on the negative side of the curve
        condition: DIRICHLET, NEUMANN, or a callable returning a boolean
            "is Neumann" mask for an (n, 2) array of on-curve points
    """

    curve: Curve
    domain_inside: bool = True
    condition: Condition = DIRICHLET

    def domain_value(self, points) -> np.ndarray:
        vals = self.curve.value(_as_points(points)[0])
        return vals if self.domain_inside else -vals

    def normals(self, points) -> np.ndarray:
        n = self.curve.normals(_as_points(points)[0])
        return n if self.domain_inside else -n

    def outward_normal(self, xbar) -> np.ndarray:
        n = outward_normal(self.curve, xbar)
        return n if self.domain_inside else -n

    def conditions(self, points) -> np.ndarray:
        pts, _ = _as_points(points)
        if isinstance(self.condition, str):
            return np.full(pts.shape[0], self.condition, dtype=object)
        mask = np.asarray(self.condition(pts), dtype=bool)
        return np.where(mask, NEUMANN, DIRICHLET).astype(object)


def _identity() -> Tuple[Tuple[float, float], Tuple[float, float]]:
    return ((1.0, 0.0), (0.0, 1.0))


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Domain, boundary partition, optional interface and per-region conductivity."""

    name: str
    boundary: Tuple[BoundaryPiece, ...]
    interface: Optional[Curve] = None
    conductivity: Tuple = field(default_factory=lambda: (_identity(), _identity()))

    def __post_init__(self):
        for region in (1, 2):
            K = self.tensor(region)
            if not np.allclose(K, K.T) or np.min(np.linalg.eigvalsh(K)) <= 0:
                raise ParameterDomainError(f"Conductivity of region {region} is not SPD: {K.tolist()}")

    def tensor(self, region: int) -> np.ndarray:
        return np.asarray(self.conductivity[region - 1], dtype=float)

    def value(self, points) -> np.ndarray:
        """Negative inside the domain."""
        pts, _ = _as_points(points)
        return np.max(np.vstack([p.domain_value(pts) for p in self.boundary]), axis=0)

    def region(self, points) -> np.ndarray:
        pts, _ = _as_points(points)
        if self.interface is None:
            return np.ones(pts.shape[0], dtype=int)
        return np.where(self.interface.value(pts) < 0, 1, 2)

    def nearest_piece(self, points) -> np.ndarray:
        pts, _ = _as_points(points)
        dist = np.vstack([p.curve.distance_estimate(pts) for p in self.boundary])
        return np.argmin(dist, axis=0)

    def bounding_box(self) -> Tuple[float, float, float, float]:
        boxes = np.array([p.curve.bounding_box() for p in self.boundary])
        return (float(boxes[:, 0].min()), float(boxes[:, 1].max()),
                float(boxes[:, 2].min()), float(boxes[:, 3].max()))

    def curves(self) -> Sequence[Curve]:
        out = [p.curve for p in self.boundary]
        if self.interface is not None:
            out.append(self.interface)
        return out
