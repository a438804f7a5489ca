"""
Element-by-element postprocessing u*_h in P^{k+1}(K).

u*_h = ubar + utilde, where utilde has zero mean and solves
(grad utilde, grad w) = -(K^-1 q_h, grad w) for all w in P^{k+1}(K), and ubar
is the mean of u_h (k > 0) or the average of the three face means of uhat
(k = 0).
"""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from transfer_hdg.core.basis import ElementBasis
from transfer_hdg.core.errors import AssemblyError
from transfer_hdg.core.hdg import FieldSolution
from transfer_hdg.core.quadrature import map_to_triangle, triangle_rule

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class PostprocessedField:
    degree: int
    bases: List[ElementBasis]
    coefficients: np.ndarray

    def eval(self, t: int, points: np.ndarray) -> np.ndarray:
        return self.bases[t].eval(points) @ self.coefficients[t]

    def mean(self, t: int) -> float:
        basis = self.bases[t]
        pts, wts = map_to_triangle(basis.vertices, triangle_rule(self.degree))
        return float(np.dot(wts, self.eval(t, pts)) / wts.sum())


def _mean_value(solution: FieldSolution, t: int) -> float:
    blk = solution.system.blocks[t]
    if solution.k > 0:
        basis = solution.space.bases[t]
        pts, wts = map_to_triangle(basis.vertices, triangle_rule(solution.k))
        return float(np.dot(wts, solution.u_at(t, pts)) / wts.sum())
    face_means = [np.dot(face.weights, solution.face_trace(t, j)) / face.length
                  for j, face in enumerate(blk.faces)]
    return float(np.mean(face_means))


def postprocess(solution: FieldSolution) -> PostprocessedField:
    """Local Neumann problems with a Lagrange multiplier for the zero mean."""
    k = solution.k
    degree = k + 1
    mesh = solution.mesh
    rule = triangle_rule(2 * degree)
    bases, coefficients = [], []
    for t in range(mesh.num_triangles):
        basis = ElementBasis(mesh.vertices[mesh.triangles[t]], degree)
        pts, wts = map_to_triangle(basis.vertices, rule)
        phi = basis.eval(pts)
        grad = basis.grad(pts)
        stiff = np.einsum("p,pic,pjc->ij", wts, grad, grad)
        kinv = solution.system.blocks[t].kinv
        flux = solution.q_at(t, pts) @ kinv.T
        load = -np.einsum("p,pc,pic->i", wts, flux, grad)
        ones = phi.T @ wts
        size = basis.size
        bordered = np.zeros((size + 1, size + 1))
        bordered[:size, :size] = stiff
        bordered[:size, size] = ones
        bordered[size, :size] = ones
        try:
            sol = np.linalg.solve(bordered, np.concatenate([load, [0.0]]))
        except np.linalg.LinAlgError as exc:
            raise AssemblyError(f"Singular postprocessing system on element {t}") from exc
        # orthonormal basis: the coefficients of the constant 1 are (1, phi_i)
        coef = sol[:size] + _mean_value(solution, t) * ones
        bases.append(basis)
        coefficients.append(coef)
    logger.debug("Postprocessed %d elements to degree %d", mesh.num_triangles, degree)
    return PostprocessedField(degree, bases, np.array(coefficients))
