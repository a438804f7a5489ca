#!/usr/bin/env python3
"""
Tests for the HDG element blocks, global assembly and the linear solves.

Linear exact solutions are reproduced to round-off at k = 1 whenever the
transfer is exact, which covers fitted, immersed and interface meshes.
"""
import sys
from dataclasses import replace

import numpy as np
import pytest
from scipy.sparse import csr_matrix

from transfer_hdg.core.analysis import Branch, ManufacturedCase, case
from transfer_hdg.core.basis import project_on_edge, project_on_element
from transfer_hdg.core.errors import AssemblyError, InterfaceSideError, SingularSystemError
from transfer_hdg.core.geometry import DIRICHLET, BoundaryPiece, DomainSpec, PolygonCurve
from transfer_hdg.core.hdg import (
    DiscreteSpace,
    assemble,
    conservation_summary,
    element_blocks,
    local_conservation,
    solve,
    solve_condensed,
    solve_linear,
    stabilization,
)
from transfer_hdg.core.mesh import (
    EDGE_DIRICHLET,
    EDGE_INTERFACE,
    EDGE_INTERIOR,
    EDGE_NEUMANN,
    classify_edges,
    generate_immersed,
    generate_square_grid,
    mesh_from_triangles,
)
from transfer_hdg.core.paths import build_paths

ANISOTROPIC = ((2.0, 0.5), (0.5, 1.0))
IDENTITY = ((1.0, 0.0), (0.0, 1.0))


def linear(c0: float, cx: float, cy: float) -> Branch:
    def value(p):
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        return c0 + cx * p[:, 0] + cy * p[:, 1]

    def gradient(p):
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        return np.tile([cx, cy], (p.shape[0], 1)).astype(float)

    def hessian(p):
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        return np.zeros((p.shape[0], 2, 2))

    return Branch(f"{c0}+{cx}x+{cy}y", value, gradient, hessian)


def box(x0, x1, y0, y1) -> PolygonCurve:
    return PolygonCurve(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def left_side(points):
    return np.abs(points[:, 0]) < 1e-9


def solve_case(mesh, mc, k, condensed=False):
    family = build_paths(mesh, mc.domain, mc.strategy, k=k)
    system = assemble(mesh, mc.domain, family, k, mc)
    return (solve_condensed if condensed else solve)(system)


def assert_reproduces(solution, mc, atol=1e-9):
    mesh = solution.mesh
    for t in range(mesh.num_triangles):
        region = int(mesh.regions[t])
        pts = mesh.vertices[mesh.triangles[t]] * 0.9 + 0.1 * mesh.vertices[mesh.triangles[t]].mean(axis=0)
        np.testing.assert_allclose(solution.u_at(t, pts), mc.u(pts, region), atol=atol)
        np.testing.assert_allclose(solution.q_at(t, pts), mc.q(pts, region), atol=atol)
        for j, face in enumerate(solution.system.blocks[t].faces):
            np.testing.assert_allclose(solution.face_trace(t, j), mc.u(face.points, region), atol=atol)


def test_discrete_space_size():
    space = DiscreteSpace(generate_square_grid(n=2), 1)
    assert space.n == 3
    assert space.size == 3 * 3 * 8 + 2 * 16
    assert space.u_dofs(0)[0] == space.u_offset
    assert space.lam_dofs(1)[0] == space.lam_offset + 2


def test_stabilization_uses_spectral_norm():
    assert stabilization(((4.0, 0.0), (0.0, 1.0))) == pytest.approx(4.0)
    assert stabilization(IDENTITY, scale=3.0) == pytest.approx(3.0)


@pytest.mark.parametrize("k", [1, 2])
def test_element_residual_vanishes_for_linear_fields(k):
    vertices = np.array([[0.1, 0.0], [0.6, 0.2], [0.2, 0.5]])
    K = np.array(ANISOTROPIC)
    grad = np.array([1.5, -0.7])
    u = lambda p: 0.3 + p @ grad
    q = lambda p: np.tile(-K @ grad, (p.shape[0], 1))
    blocks = element_blocks(vertices, k, K, tau=2.0)
    q_coef = project_on_element(blocks.basis, q)
    u_coef = project_on_element(blocks.basis, u)
    traces = []
    for face in blocks.faces:
        traces.append(project_on_edge(
            k, lambda th, s=face.start, e=face.end: u(s[None] + np.outer(th, e - s)), k + 2))
    np.testing.assert_allclose(blocks.residual(q_coef, u_coef, traces), 0.0, atol=1e-12)


def test_fitted_square_reproduces_linear_solution():
    domain = DomainSpec("square", (BoundaryPiece(box(0, 1, 0, 1), True, DIRICHLET),))
    mc = ManufacturedCase("linear", "fitted square", domain, (linear(1.0, 2.0, -3.0),))
    mesh = classify_edges(generate_square_grid(n=4), domain)
    assert_reproduces(solve_case(mesh, mc, 1), mc)


def test_immersed_square_reproduces_linear_solution():
    domain = DomainSpec("square", (BoundaryPiece(box(0, 1, 0, 1), True, left_side),),
                        conductivity=(ANISOTROPIC, ANISOTROPIC))
    mc = ManufacturedCase("linear", "immersed square", domain, (linear(0.5, -1.0, 2.0),), fit="immersed")
    mesh = classify_edges(generate_immersed(domain, 1.0 / 8.0), domain)
    assert mesh.edges_of_class(EDGE_NEUMANN).size == 6
    solution = solve_case(mesh, mc, 1)
    assert solution.residual < 1e-10
    assert_reproduces(solution, mc)


def interface_patch(branches):
    interface = PolygonCurve(((-2.0, -2.0), (0.0, -2.0), (0.0, 2.0), (-2.0, 2.0)))
    domain = DomainSpec("patch", (BoundaryPiece(box(-1, 1, -1, 1), True, DIRICHLET),), interface,
                        (IDENTITY, ((2.0, 0.0), (0.0, 2.0))))
    grid = generate_square_grid((-1.0, 1.0, -1.0, 1.0), 4)
    centroids = grid.vertices[grid.triangles].mean(axis=1)
    regions = np.where(centroids[:, 0] < 0, 1, 2)
    mesh = classify_edges(mesh_from_triangles(grid.vertices, grid.triangles, regions), domain)
    return mesh, ManufacturedCase("patch", "straight interface", domain, branches)


def test_interface_patch_reproduces_piecewise_linear_solution():
    mesh, mc = interface_patch((linear(1.0, 1.0, 2.0), linear(3.0, -1.0, 1.0)))
    assert mesh.edges_of_class(EDGE_INTERFACE).size == 4
    assert_reproduces(solve_case(mesh, mc, 1), mc)


def test_interface_patch_reproduces_constant_jump_at_k0():
    mesh, mc = interface_patch((linear(1.0, 0.0, 0.0), linear(0.0, 0.0, 0.0)))
    solution = solve_case(mesh, mc, 0)
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    values = np.array([solution.u_at(t, centroids[t][None])[0] for t in range(mesh.num_triangles)])
    np.testing.assert_allclose(values, np.where(mesh.regions == 1, 1.0, 0.0), atol=1e-10)
    np.testing.assert_allclose(solution.q, 0.0, atol=1e-10)


def test_condensed_solve_matches_monolithic():
    mc = case("ex6")
    mesh = mc.mesh(16)
    family = build_paths(mesh, mc.domain, "p2", k=1)
    system = assemble(mesh, mc.domain, family, 1, mc)
    assert system.block_counts()["interface"] > 0
    direct = solve(system).coefficients
    condensed = solve_condensed(system).coefficients
    assert np.max(np.abs(condensed - direct)) <= 1e-10 * np.max(np.abs(direct))


def test_local_conservation_holds_on_every_element():
    mc = case("ex1")
    mesh = mc.mesh(8)
    solution = solve_case(mesh, mc, 1)
    residuals = local_conservation(solution)
    assert np.max(np.abs(residuals)) < 1e-10
    summary = conservation_summary(residuals, mesh)
    assert set(summary) == {"standard_max", "modified_max"}


def test_singular_system_reports_block():
    matrix = csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SingularSystemError) as excinfo:
        solve_linear(matrix, np.array([1.0, 1.0]), ["hdg2", "dirichlet"])
    assert excinfo.value.block == "dirichlet"
    assert excinfo.value.row == 1


def polynomial(k: int) -> Branch:
    """Degree-k polynomial (k = 2 or 3) with mixed terms."""
    cubic = 1.0 if k >= 3 else 0.0

    def value(p):
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        return (1.0 + x - 2.0 * y + x * x + 0.5 * x * y - y * y
                + cubic * (0.3 * x ** 3 - x * y * y + 0.2 * y ** 3))

    def gradient(p):
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        gx = 1.0 + 2.0 * x + 0.5 * y + cubic * (0.9 * x * x - y * y)
        gy = -2.0 + 0.5 * x - 2.0 * y + cubic * (-2.0 * x * y + 0.6 * y * y)
        return np.column_stack([gx, gy])

    def hessian(p):
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        out = np.empty((p.shape[0], 2, 2))
        out[:, 0, 0] = 2.0 + cubic * 1.8 * x
        out[:, 0, 1] = out[:, 1, 0] = 0.5 - cubic * 2.0 * y
        out[:, 1, 1] = -2.0 + cubic * (-2.0 * x + 1.2 * y)
        return out

    return Branch(f"p{k}", value, gradient, hessian)


@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("condition", [DIRICHLET, left_side], ids=["dirichlet", "mixed"])
def test_fitted_square_is_exact_for_degree_k_polynomials(k, condition):
    domain = DomainSpec("square", (BoundaryPiece(box(0, 1, 0, 1), True, condition),),
                        conductivity=(ANISOTROPIC, ANISOTROPIC))
    mc = ManufacturedCase("poly", "fitted square", domain, (polynomial(k),))
    mesh = classify_edges(generate_square_grid(n=4), domain)
    assert_reproduces(solve_case(mesh, mc, k), mc, atol=1e-10)


@pytest.mark.parametrize("k", [2, 3])
def test_immersed_square_is_exact_for_degree_k_polynomials(k):
    domain = DomainSpec("square", (BoundaryPiece(box(0, 1, 0, 1), True, left_side),),
                        conductivity=(ANISOTROPIC, ANISOTROPIC))
    mc = ManufacturedCase("poly", "immersed square", domain, (polynomial(k),), fit="immersed")
    mesh = classify_edges(generate_immersed(domain, 1.0 / 8.0), domain)
    assert_reproduces(solve_case(mesh, mc, k), mc, atol=1e-8)


@pytest.mark.parametrize("tau_scale", [0.1, 10.0])
def test_linear_solution_is_reproduced_for_any_stabilization(tau_scale):
    domain = DomainSpec("square", (BoundaryPiece(box(0, 1, 0, 1), True, left_side),))
    mc = ManufacturedCase("linear", "fitted square", domain, (linear(1.0, 2.0, -3.0),))
    mesh = classify_edges(generate_square_grid(n=4), domain)
    family = build_paths(mesh, domain, "p2", k=1)
    system = assemble(mesh, domain, family, 1, mc, tau_scale=tau_scale)
    np.testing.assert_allclose(system.tau, tau_scale)
    assert_reproduces(solve(system), mc)


def test_block_counts_account_for_every_row():
    mesh, mc = interface_patch((linear(1.0, 1.0, 2.0), linear(3.0, -1.0, 1.0)))
    k = 2
    family = build_paths(mesh, mc.domain, "p2", k=k)
    system = assemble(mesh, mc.domain, family, k, mc)
    counts = system.block_counts()
    nt = mesh.num_triangles
    assert counts["hdg2"] == 2 * 6 * nt
    assert counts["hdg1"] == 6 * nt
    assert counts["interior"] == 3 * mesh.edges_of_class(EDGE_INTERIOR).size
    assert counts["interface"] == 3 * mesh.edges_of_class(EDGE_INTERFACE).size
    assert counts["dirichlet"] == 3 * mesh.edges_of_class(EDGE_DIRICHLET).size
    assert counts["neumann"] == 0
    assert sum(counts.values()) == system.matrix.shape[0]


def test_duplicated_dirichlet_row_is_reported():
    domain = DomainSpec("square", (BoundaryPiece(box(0, 1, 0, 1), True, DIRICHLET),))
    mc = ManufacturedCase("linear", "fitted square", domain, (linear(1.0, 2.0, -3.0),))
    mesh = classify_edges(generate_square_grid(n=4), domain)
    family = build_paths(mesh, domain, "p2", k=1)
    system = assemble(mesh, domain, family, 1, mc)
    rows = np.nonzero(system.labels == "dirichlet")[0]
    matrix = system.matrix.tolil()
    matrix[rows[-1], :] = matrix[rows[0], :]
    broken = replace(system, matrix=csr_matrix(matrix))
    with pytest.raises(SingularSystemError) as excinfo:
        solve(broken)
    assert excinfo.value.block == "dirichlet"
    assert excinfo.value.row == rows[-1]


def test_edge_straddling_the_interface_is_rejected():
    # true interface x = y - 1/8 crosses the mesh interface x = 0 inside edge (0, 0)-(0, 1/4)
    interface = PolygonCurve(((-3.125, -3.0), (2.875, 3.0), (-6.0, 3.0), (-6.0, -3.0)))
    domain = DomainSpec("tilted", (BoundaryPiece(box(-1, 1, -1, 1), True, DIRICHLET),), interface,
                        (IDENTITY, IDENTITY))
    grid = generate_square_grid((-1.0, 1.0, -1.0, 1.0), 8)
    centroids = grid.vertices[grid.triangles].mean(axis=1)
    regions = np.where(centroids[:, 0] < 0, 1, 2)
    mesh = classify_edges(mesh_from_triangles(grid.vertices, grid.triangles, regions), domain)
    mc = ManufacturedCase("tilted", "mis-tagged interface", domain, (linear(1.0, 1.0, 0.0), linear(1.0, 1.0, 0.0)))
    family = build_paths(mesh, domain, "p2", k=1)
    with pytest.raises(InterfaceSideError) as excinfo:
        assemble(mesh, domain, family, 1, mc)
    a, b = mesh.vertices[mesh.edges[excinfo.value.edge]]
    np.testing.assert_allclose([a[0], b[0]], 0.0, atol=1e-12)
    assert min(a[1], b[1]) == pytest.approx(0.0, abs=1e-12)
    assert isinstance(excinfo.value, AssemblyError)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
