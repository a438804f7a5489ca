#!/usr/bin/env python3
"""
Tests for the manufactured-solution catalog, the error norms and the orders of convergence.
"""
import sys

import numpy as np
import pytest

from transfer_hdg.core.analysis import (
    AIRFOIL_R,
    AIRFOIL_S,
    CASE_LABELS,
    Branch,
    ErrorReport,
    ManufacturedCase,
    away_from_interface,
    case,
    check_self_consistency,
    eoc,
    error_norms,
    sample_region,
)
from transfer_hdg.core.errors import HdgError, UnknownCaseError
from transfer_hdg.core.geometry import DIRICHLET, BoundaryPiece, DomainSpec, PolygonCurve, joukowsky_airfoil
from transfer_hdg.core.hdg import assemble, solve
from transfer_hdg.core.mesh import classify_edges, generate_square_grid, mesh_from_triangles
from transfer_hdg.core.paths import build_paths
from transfer_hdg.core.postprocess import postprocess


def planar(c0, cx, cy) -> Branch:
    return Branch(
        "planar",
        lambda p: c0 + np.asarray(p, dtype=float).reshape(-1, 2) @ np.array([cx, cy]),
        lambda p: np.tile([float(cx), float(cy)], (np.asarray(p).reshape(-1, 2).shape[0], 1)),
        lambda p: np.zeros((np.asarray(p).reshape(-1, 2).shape[0], 2, 2)),
    )


def test_unknown_case_is_rejected():
    with pytest.raises(UnknownCaseError):
        case("ex42")
    with pytest.raises(HdgError):
        case("ex5b", ex5_frame="sideways")


@pytest.mark.parametrize("label", [c for c in CASE_LABELS if c != "ex5b"])
def test_catalog_fluxes_and_sources_are_consistent(label):
    worst = check_self_consistency(case(label), count=40)
    assert worst["flux"] < 1e-6
    assert worst["source"] < 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("frame", ["preimage", "airfoil"])
def test_potential_flow_is_consistent(frame):
    worst = check_self_consistency(case("ex5b", ex5_frame=frame), count=20)
    assert worst["flux"] < 1e-4
    assert worst["source"] < 1e-4


def test_potential_flow_has_no_normal_flux_on_airfoil():
    mc = case("ex5b")
    foil = joukowsky_airfoil(AIRFOIL_R, *AIRFOIL_S)
    theta = np.linspace(0.1, 2.0 * np.pi + 0.1, 12, endpoint=False)
    pts = foil.point(theta)
    tangents = foil.tangent(theta)
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]]) / np.linalg.norm(tangents, axis=1)[:, None]
    q = mc.q(pts)
    scale = np.maximum(1.0, np.linalg.norm(q, axis=1))
    assert np.max(np.abs(mc.neumann(pts, normals)) / scale) < 1e-8


def test_contrast_case_has_continuous_data_across_circle():
    mc = case("ex8")
    angles = np.linspace(0.0, 2.0 * np.pi, 17)
    pts = 0.5 * np.column_stack([np.cos(angles), np.sin(angles)])
    normals = 2.0 * pts
    np.testing.assert_allclose(mc.jump_value(pts), 0.0, atol=1e-14)
    np.testing.assert_allclose(mc.jump_flux(pts, normals), 0.0, atol=1e-12)
    # div(K grad u) = 25 r^3 in both regions
    assert mc.source(np.array([[0.3, 0.4]]), 1)[0] == pytest.approx(3.125)
    assert mc.source(np.array([[0.6, 0.8]]), 2)[0] == pytest.approx(25.0)


def test_sample_region_respects_interface():
    mc = case("ex6")
    inside = sample_region(mc, 1, 30)
    outside = sample_region(mc, 2, 30)
    assert np.all(mc.domain.interface.value(inside) < 0)
    assert np.all(mc.domain.interface.value(outside) > 0)
    assert np.all(np.abs(outside) <= 1.0)


def test_eoc_values():
    assert eoc([0.25, 0.125], [1e-2, 2.5e-3]) == [None, pytest.approx(2.0)]
    assert eoc([0.25, 0.125], [1e-3, 1e-3]) == [None, pytest.approx(0.0)]
    assert eoc([0.25, 0.125, 0.0625], [1e-3, 0.0, 1e-5]) == [None, None, None]


def test_eoc_rejects_bad_input():
    with pytest.raises(HdgError):
        eoc([0.1, 0.1], [1e-2, 1e-3])
    with pytest.raises(HdgError):
        eoc([0.1], [1e-2, 1e-3])


def test_error_report_orders_within_each_degree():
    report = ErrorReport("demo")
    for k, rate in ((1, 2.0), (2, 3.0)):
        for h in (0.5, 0.25, 0.125):
            err = h ** rate
            report.add(k, h, {"e_u": err, "e_q": err, "e_uhat": err, "e_ustar": err * h})
    table = report.table()
    assert report.degrees() == [1, 2]
    assert len(table) == 6
    assert table[0]["ord_u"] is None and table[3]["ord_u"] is None
    assert table[2]["ord_u"] == pytest.approx(2.0)
    assert table[5]["ord_q"] == pytest.approx(3.0)
    assert table[5]["ord_ustar"] == pytest.approx(4.0)


def test_norms_vanish_for_reproduced_solution():
    square = PolygonCurve(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))
    domain = DomainSpec("square", (BoundaryPiece(square, True, DIRICHLET),))
    mc = ManufacturedCase("linear", "fitted square", domain, (planar(2.0, -1.0, 0.5),))
    mesh = classify_edges(generate_square_grid(n=2), domain)
    family = build_paths(mesh, domain, "p2", k=1)
    solution = solve(assemble(mesh, domain, family, 1, mc))
    norms = error_norms(solution, postprocess(solution), mc)
    assert set(norms) == {"e_u", "e_q", "e_uhat", "e_ustar"}
    assert max(norms.values()) < 1e-9


def test_away_from_interface_mask():
    grid = generate_square_grid((-1.0, 1.0, -1.0, 1.0), 4)
    centroids = grid.vertices[grid.triangles].mean(axis=1)
    mesh = mesh_from_triangles(grid.vertices, grid.triangles, np.where(centroids[:, 0] < 0, 1, 2))
    assert int(away_from_interface(mesh).sum()) == 24


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
