#!/usr/bin/env python3
"""
Tests for P1/P2 transfer paths, their charts and the path diagnostics.
"""
import sys

import numpy as np
import pytest

from transfer_hdg.core.analysis import case
from transfer_hdg.core.errors import FoldBackError, PathError, PathLengthError, RayMissError
from transfer_hdg.core.geometry import DIRICHLET, NEUMANN, BoundaryPiece, Circle, DomainSpec
from transfer_hdg.core.mesh import classify_edges, generate_annulus, generate_square_grid
from transfer_hdg.core.paths import (
    EdgePaths,
    PathFamily,
    build_paths,
    edge_chart,
    sample_thetas,
    transfer_edges,
    validate_paths,
)
from transfer_hdg.core.quadrature import gauss_interval


def ring_domain(r_in=1.0, r_out=2.0):
    return DomainSpec("ring", (BoundaryPiece(Circle((0.0, 0.0), r_in), False, NEUMANN),
                               BoundaryPiece(Circle((0.0, 0.0), r_out), True, DIRICHLET)))


def radii(points):
    return np.hypot(points[:, 0], points[:, 1])


@pytest.fixture
def fitted_ring():
    domain = ring_domain()
    return classify_edges(generate_annulus((0.0, 0.0), 1.0, 2.0, 24, 2), domain), domain


def test_sample_thetas_include_vertices_and_gauss_points():
    theta = sample_thetas(1)
    assert theta.size == 6
    assert theta[0] == 0.0 and theta[-1] == 1.0
    np.testing.assert_allclose(theta[1:-1], gauss_interval(4).points)


def test_p2_paths_on_fitted_ring(fitted_ring):
    mesh, domain = fitted_ring
    family = build_paths(mesh, domain, "p2", k=1)
    assert len(family) == transfer_edges(mesh).size == 48
    for paths in family:
        target = 1.0 if np.hypot(*paths.origins[0]) < 1.5 else 2.0
        np.testing.assert_allclose(radii(paths.endpoints), target, atol=1e-12)
        assert paths.lengths[0] < 1e-12 and paths.lengths[-1] < 1e-12
    diagnostics = validate_paths(family, mesh, domain)
    assert diagnostics.max_ratio < 0.5
    assert diagnostics.crossings == 0
    assert diagnostics.wrong_region == 0
    assert diagnostics.long_paths == 0


def test_p2_paths_on_immersed_square_have_inset_length():
    mc = case("ex1")
    mesh = mc.mesh(4)
    family = build_paths(mesh, mc.domain, "p2", k=0)
    for paths in family:
        np.testing.assert_allclose(paths.lengths, 0.25, atol=1e-14)
        np.testing.assert_allclose(paths.tangents, np.tile(paths.normal, (len(paths), 1)), atol=1e-14)


def test_p1_paths_are_convex_combinations():
    domain = ring_domain()
    mesh = classify_edges(generate_annulus((0.0, 0.0), 1.0, 2.0, 24, 2, inset=0.05), domain)
    family = build_paths(mesh, domain, "p1", k=2)
    for paths in family:
        vertex_ends = paths.endpoints[[0, -1]]
        target = 1.0 if np.hypot(*paths.origins[0]) < 1.5 else 2.0
        np.testing.assert_allclose(radii(vertex_ends), target, atol=1e-12)
        np.testing.assert_allclose(paths.lengths[[0, -1]], 0.05, atol=1e-12)
        d_a, d_b = paths.displacements[0], paths.displacements[-1]
        expected = np.outer(1.0 - paths.theta, d_a) + np.outer(paths.theta, d_b)
        np.testing.assert_allclose(paths.displacements, expected, atol=1e-14)
    assert validate_paths(family, mesh).crossings == 0


def thin_ring():
    domain = ring_domain()
    return classify_edges(generate_annulus((0.0, 0.0), 1.0, 2.0, 600, 1, inset=0.49), domain), domain


def test_paths_longer_than_ten_h_are_rejected():
    mesh, domain = thin_ring()
    with pytest.raises(PathLengthError) as excinfo:
        build_paths(mesh, domain, "p1", k=0)
    assert excinfo.value.length >= 10 * excinfo.value.h


def test_p2_ray_miss_without_fallback():
    mesh, domain = thin_ring()
    with pytest.raises(RayMissError):
        build_paths(mesh, domain, "p2", k=0)


def test_build_paths_argument_checks(fitted_ring):
    mesh, domain = fitted_ring
    with pytest.raises(PathError):
        build_paths(mesh, domain, "p3")
    with pytest.raises(PathError):
        build_paths(mesh, domain, "p2", theta=[0.2, 0.5, 1.0])
    family = build_paths(mesh, domain, "p2", k=0)
    with pytest.raises(PathError):
        family[10 ** 6]


def test_records_list_every_sample(fitted_ring):
    mesh, domain = fitted_ring
    family = build_paths(mesh, domain, "p2", k=0)
    rows = list(family.records())
    assert len(rows) == sum(len(paths) for paths in family)
    assert all(len(row) == 7 for row in rows)


def test_p2_chart_evaluates_on_curve():
    mc = case("ex1")
    mesh = mc.mesh(4)
    family = build_paths(mesh, mc.domain, "p2", k=1)
    e = next(iter(family)).edge
    chart = edge_chart(e, family, mesh)
    images = chart.evaluate([0.1, 0.6])
    assert np.max(np.abs(mc.domain.boundary[0].curve.value(images))) < 1e-12
    np.testing.assert_allclose(chart.endpoints[0], family[e].endpoints[0])


def test_folded_chart_is_rejected():
    mesh = generate_square_grid(n=1)
    domain = case("ex1").domain
    e = 0
    theta = np.array([0.0, 0.5, 1.0])
    origins = mesh.edge_points(e, theta)
    family = PathFamily("p1")
    family.edges[e] = EdgePaths(e, domain.boundary[0].curve, mesh.edge_normal(e, mesh.edge_elements[e, 0]),
                                theta, origins, origins[::-1].copy())
    with pytest.raises(FoldBackError):
        edge_chart(e, family, mesh)
    family.edges[e] = EdgePaths(e, domain.boundary[0].curve, family[e].normal, theta, origins, origins.copy())
    edge_chart(e, family, mesh)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
