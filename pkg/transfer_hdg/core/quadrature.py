"""
Quadrature rules on the reference triangle and on [0, 1].
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from transfer_hdg.core.errors import QuadratureError


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Points and positive weights of a rule on a reference domain."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return int(self.weights.size)


@lru_cache(maxsize=None)
def gauss_interval(npoints: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1]; exact to degree 2 npoints - 1."""
    x, w = leggauss(npoints)
    return QuadratureRule(points=0.5 * (x + 1.0), weights=0.5 * w)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Collapsed Gauss rule on the triangle (0,0), (1,0), (0,1).

    The Duffy map x = u, y = v (1 - u) turns a degree-p polynomial into one of
    degree p + 1 in u, so ceil((p + 2) / 2) points per direction are enough.
    """
    n = max(1, int(np.ceil((degree + 2) / 2)))
    line = gauss_interval(n)
    u, v = np.meshgrid(line.points, line.points, indexing="ij")
    wu, wv = np.meshgrid(line.weights, line.weights, indexing="ij")
    pts = np.column_stack([u.ravel(), (v * (1.0 - u)).ravel()])
    wts = (wu * wv * (1.0 - u)).ravel()
    return QuadratureRule(points=pts, weights=wts)


def quadrature(k: int) -> Tuple[QuadratureRule, QuadratureRule, QuadratureRule]:
    """Rules used by a degree-k discretization.

    Returns:
        (triangle rule exact to degree 2k + 2, edge rule with k + 3 Gauss points,
        unit-interval rule with k + 3 Gauss points)
    """
    if k < 0:
        raise QuadratureError(f"Polynomial degree must be nonnegative, got {k}")
    line = gauss_interval(k + 3)
    return triangle_rule(2 * k + 2), line, line


def map_to_triangle(vertices: np.ndarray, rule: QuadratureRule) -> Tuple[np.ndarray, np.ndarray]:
    """Physical points and weights of a reference rule on a straight triangle."""
    v0, v1, v2 = np.asarray(vertices, dtype=float)
    jac = np.column_stack([v1 - v0, v2 - v0])
    det = abs(np.linalg.det(jac))
    return v0 + rule.points @ jac.T, rule.weights * det
