#!/usr/bin/env python3
"""
Tests for the element-by-element postprocessed scalar u*.
"""
import sys

import numpy as np
import pytest

from transfer_hdg.core.analysis import Branch, ManufacturedCase, case
from transfer_hdg.core.geometry import DIRICHLET, BoundaryPiece, DomainSpec, PolygonCurve
from transfer_hdg.core.hdg import assemble, solve
from transfer_hdg.core.mesh import classify_edges, generate_square_grid
from transfer_hdg.core.paths import build_paths
from transfer_hdg.core.postprocess import _mean_value, postprocess

UNIT_SQUARE = PolygonCurve(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))


def planar(c0, cx, cy) -> Branch:
    return Branch(
        "planar",
        lambda p: c0 + np.asarray(p, dtype=float).reshape(-1, 2) @ np.array([cx, cy]),
        lambda p: np.tile([float(cx), float(cy)], (np.asarray(p).reshape(-1, 2).shape[0], 1)),
        lambda p: np.zeros((np.asarray(p).reshape(-1, 2).shape[0], 2, 2)),
    )


def solved(mc, mesh, k):
    family = build_paths(mesh, mc.domain, mc.strategy, k=k)
    return solve(assemble(mesh, mc.domain, family, k, mc))


def test_postprocessing_reproduces_linear_solution():
    domain = DomainSpec("square", (BoundaryPiece(UNIT_SQUARE, True, DIRICHLET),))
    mc = ManufacturedCase("linear", "fitted square", domain, (planar(-0.5, 1.0, 0.25),))
    mesh = classify_edges(generate_square_grid(n=3), domain)
    solution = solved(mc, mesh, 1)
    post = postprocess(solution)
    assert post.degree == 2
    for t in range(mesh.num_triangles):
        pts = mesh.vertices[mesh.triangles[t]] * 0.8 + 0.2 * mesh.vertices[mesh.triangles[t]].mean(axis=0)
        np.testing.assert_allclose(post.eval(t, pts), mc.u(pts), atol=1e-9)


@pytest.mark.parametrize("k", [0, 1])
def test_postprocessed_mean_matches_prescribed_mean(k):
    mc = case("ex1")
    mesh = mc.mesh(8)
    solution = solved(mc, mesh, k)
    post = postprocess(solution)
    assert post.degree == k + 1
    for t in range(mesh.num_triangles):
        assert post.mean(t) == pytest.approx(_mean_value(solution, t), abs=1e-12)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
