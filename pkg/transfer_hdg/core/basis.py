"""
Polynomial bases: orthonormalized monomials on triangles and Legendre
polynomials on edges.
"""
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial import legendre

from transfer_hdg.core.quadrature import gauss_interval, map_to_triangle, triangle_rule


def dim_pk(k: int) -> int:
    """Dimension of P^k in two variables."""
    return (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(k: int) -> Tuple[Tuple[int, int], ...]:
    return tuple((d - j, j) for d in range(k + 1) for j in range(d + 1))


class ElementBasis:
    """Orthonormal basis of P^k(K) built from scaled monomials.

    The monomials are centred at the centroid and scaled by the diameter, then
    orthonormalized in L2(K) through a Cholesky factor of their mass matrix.
    Evaluation is valid anywhere in the plane, which is how polynomials are
    extended beyond their element.
    """

    def __init__(self, vertices: np.ndarray, degree: int):
        self.vertices = np.asarray(vertices, dtype=float)
        self.degree = degree
        self.size = dim_pk(degree)
        self.center = self.vertices.mean(axis=0)
        edges = self.vertices[[1, 2, 0]] - self.vertices
        self.diameter = float(np.max(np.linalg.norm(edges, axis=1)))
        self._exponents = np.array(monomial_exponents(degree))
        pts, wts = map_to_triangle(self.vertices, triangle_rule(2 * degree))
        raw = self._monomials(pts)
        mass = raw.T @ (wts[:, None] * raw)
        chol = np.linalg.cholesky(mass)
        # phi = inv(L) m, so coefficients act on the monomial vector from the left
        self.coefficients = np.linalg.inv(chol)

    def _scaled(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float).reshape(-1, 2) - self.center) / self.diameter

    def _monomials(self, points: np.ndarray) -> np.ndarray:
        xi = self._scaled(points)
        ex = self._exponents
        return xi[:, 0:1] ** ex[None, :, 0] * xi[:, 1:2] ** ex[None, :, 1]

    def _monomial_gradients(self, points: np.ndarray) -> np.ndarray:
        xi = self._scaled(points)
        ex = self._exponents
        px, py = ex[:, 0], ex[:, 1]
        dx = px * xi[:, 0:1] ** np.maximum(px - 1, 0) * xi[:, 1:2] ** py
        dy = py * xi[:, 0:1] ** px * xi[:, 1:2] ** np.maximum(py - 1, 0)
        return np.stack([dx, dy], axis=2) / self.diameter

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Basis values, shape (npoints, size)."""
        return self._monomials(points) @ self.coefficients.T

    def grad(self, points: np.ndarray) -> np.ndarray:
        """Basis gradients, shape (npoints, size, 2)."""
        g = self._monomial_gradients(points)
        return np.einsum("ij,pjc->pic", self.coefficients, g)


def edge_basis(k: int, theta: np.ndarray) -> np.ndarray:
    """Orthonormal Legendre basis of P^k([0, 1]) at theta, shape (ntheta, k + 1)."""
    t = 2.0 * np.asarray(theta, dtype=float) - 1.0
    out = np.empty((t.size, k + 1))
    for j in range(k + 1):
        c = np.zeros(j + 1)
        c[j] = 1.0
        out[:, j] = np.sqrt(2 * j + 1) * legendre.legval(t, c)
    return out


def project_on_element(basis: ElementBasis, fn, degree_boost: int = 4) -> np.ndarray:
    """L2 projection coefficients of fn (vectorized over points) onto the element basis."""
    pts, wts = map_to_triangle(basis.vertices, triangle_rule(2 * basis.degree + degree_boost))
    vals = np.asarray(fn(pts))
    phi = basis.eval(pts)
    gram = phi.T @ (wts[:, None] * phi)
    if vals.ndim == 1:
        return np.linalg.solve(gram, phi.T @ (wts * vals))
    return np.linalg.solve(gram, phi.T @ (wts[:, None] * vals)).T


def project_on_edge(k: int, fn_theta, npoints: int) -> np.ndarray:
    """Coefficients in the edge basis of the L2([0, 1]) projection of a function of theta."""
    rule = gauss_interval(npoints)
    psi = edge_basis(k, rule.points)
    return psi.T @ (rule.weights * np.asarray(fn_theta(rule.points)))
