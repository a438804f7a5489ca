"""
Degree-k HDG discretization with transfer paths.

Unknowns are ordered (q_h, u_h, lambda_h): the flux coefficients of all
elements, then the scalar coefficients, then one set of k + 1 trace
coefficients per edge. Rows follow the same layout, so HDG2 rows share the
indices of q_h, HDG1 rows those of u_h, and each edge owns k + 1 rows holding
its global condition (conservation, transferred Dirichlet data, extrapolated
Neumann data or the interface flux jump).

Local equations on K (q = -K grad u, -div q = f):

    (K^-1 q, v) - (u, div v) + <uhat, v.n> = 0
    -(q, grad w) + <qhat.n, w> = -(f, w),   qhat.n = q.n + tau (u - uhat)
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.linalg import splu

from transfer_hdg.core.basis import ElementBasis, dim_pk, edge_basis
from transfer_hdg.core.errors import (
    AssemblyError,
    InterfaceSideError,
    PathError,
    SingularElementError,
    SingularSystemError,
)
from transfer_hdg.core.geometry import Curve, DomainSpec
from transfer_hdg.core.mesh import EDGE_DIRICHLET, EDGE_INTERFACE, EDGE_INTERIOR, EDGE_NEUMANN, Mesh
from transfer_hdg.core.paths import EdgePaths, PathFamily, edge_chart, edge_curve
from transfer_hdg.core.quadrature import QuadratureRule, gauss_interval, map_to_triangle, quadrature

logger = logging.getLogger(__name__)

BLOCK_NAMES = ("hdg2", "hdg1", "interior", "dirichlet", "neumann", "interface")
BLOCK_HDG2, BLOCK_HDG1, BLOCK_INTERIOR, BLOCK_DIRICHLET, BLOCK_NEUMANN, BLOCK_INTERFACE = range(6)
EDGE_BLOCK = {
    EDGE_INTERIOR: BLOCK_INTERIOR,
    EDGE_DIRICHLET: BLOCK_DIRICHLET,
    EDGE_NEUMANN: BLOCK_NEUMANN,
    EDGE_INTERFACE: BLOCK_INTERFACE,
}
MIN_AREA = 1e-14
DEFAULT_TOL = 1e-10
REFINEMENT_STEPS = 2
# interface edges may stray this many h_e^3 to both sides of the curve
INTERFACE_SIDE_TOL = 1.0


# ---------------------------------------------------------------------------
# Spaces


@dataclass(eq=False)
class DiscreteSpace:
    """Degree-k spaces over a mesh and the global numbering of their coefficients."""

    mesh: Mesh
    k: int
    bases: List[ElementBasis] = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 0:
            raise AssemblyError(f"Polynomial degree must be nonnegative, got {self.k}")
        self.bases = [ElementBasis(self.mesh.vertices[tri], self.k) for tri in self.mesh.triangles]

    @property
    def n(self) -> int:
        return dim_pk(self.k)

    @property
    def m(self) -> int:
        return self.k + 1

    @property
    def u_offset(self) -> int:
        return 2 * self.n * self.mesh.num_triangles

    @property
    def lam_offset(self) -> int:
        return 3 * self.n * self.mesh.num_triangles

    @property
    def size(self) -> int:
        return self.lam_offset + self.m * self.mesh.num_edges

    def q_dofs(self, t: int) -> np.ndarray:
        """Flux coefficients of element t, component-major: index c * n + j."""
        return 2 * self.n * t + np.arange(2 * self.n)

    def u_dofs(self, t: int) -> np.ndarray:
        return self.u_offset + self.n * t + np.arange(self.n)

    def lam_dofs(self, e: int) -> np.ndarray:
        return self.lam_offset + self.m * e + np.arange(self.m)

    def element_dofs(self, t: int) -> np.ndarray:
        return np.concatenate([self.q_dofs(t), self.u_dofs(t)])


def stabilization(conductivity: np.ndarray, scale: float = 1.0) -> float:
    """tau = scale * ||K||_2."""
    tau = scale * float(np.linalg.norm(np.asarray(conductivity, dtype=float), 2))
    if tau <= 0:
        raise AssemblyError(f"Stabilization must be positive, got {tau}")
    return tau


# ---------------------------------------------------------------------------
# Element blocks


@dataclass(eq=False)
class FaceData:
    """One side of a triangle, parameterized from ``start`` to ``end``."""

    start: np.ndarray
    end: np.ndarray
    normal: np.ndarray
    length: float
    theta: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    psi: np.ndarray
    phi: np.ndarray


@dataclass(eq=False)
class ElementBlocks:
    """Local matrices of one triangle.

    Rows of ``A_qq``/``A_qu`` are the HDG2 equations (tested with phi_j e_c),
    rows of ``B_uq``/``stab_u`` the HDG1 equations. ``source_rhs`` is -(f, phi_j).
    """

    basis: ElementBasis
    k: int
    tau: float
    kinv: np.ndarray
    mass: np.ndarray
    A_qq: np.ndarray
    A_qu: np.ndarray
    B_uq: np.ndarray
    stab_u: np.ndarray
    source_rhs: np.ndarray
    source_integral: float
    faces: List[FaceData]

    @property
    def n(self) -> int:
        return self.basis.size

    def face_q_weights(self, j: int) -> np.ndarray:
        """W[(c, i), p] = |e| w_p phi_i(x_p) n_c: HDG2 rows against trace values at face points."""
        f = self.faces[j]
        wphi = (f.phi * f.weights[:, None]).T
        return np.vstack([f.normal[0] * wphi, f.normal[1] * wphi])

    def face_u_weights(self, j: int) -> np.ndarray:
        """W[i, p] = -tau |e| w_p phi_i(x_p): HDG1 rows against trace values at face points."""
        f = self.faces[j]
        return -self.tau * (f.phi * f.weights[:, None]).T

    def qlam(self, j: int) -> np.ndarray:
        return self.face_q_weights(j) @ self.faces[j].psi

    def ulam(self, j: int) -> np.ndarray:
        return self.face_u_weights(j) @ self.faces[j].psi

    def lamlam(self, j: int) -> np.ndarray:
        f = self.faces[j]
        return -self.tau * f.psi.T @ (f.weights[:, None] * f.psi)

    def local_matrix(self) -> np.ndarray:
        return np.block([[self.A_qq, self.A_qu], [self.B_uq, self.stab_u]])

    def residual(self, q, u, traces: Sequence[np.ndarray]) -> np.ndarray:
        """Residual of both local equations for local coefficients and face traces.

        Args:
            q: flux coefficients, shape (2, n) or (2 n,)
            u: scalar coefficients, shape (n,)
            traces: per face, the k + 1 trace coefficients in the face parameterization
        """
        q = np.asarray(q, dtype=float).reshape(-1)
        u = np.asarray(u, dtype=float)
        r2 = self.A_qq @ q + self.A_qu @ u
        r1 = self.B_uq @ q + self.stab_u @ u - self.source_rhs
        for j, lam in enumerate(traces):
            r2 = r2 + self.qlam(j) @ lam
            r1 = r1 + self.ulam(j) @ lam
        return np.concatenate([r2, r1])


def _outward(start: np.ndarray, end: np.ndarray, centroid: np.ndarray) -> np.ndarray:
    d = end - start
    n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
    return n if np.dot(n, 0.5 * (start + end) - centroid) > 0 else -n


def element_blocks(vertices: np.ndarray, k: int, conductivity: np.ndarray, tau: float,
                   source: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                   faces: Optional[Sequence[Tuple[np.ndarray, np.ndarray]]] = None,
                   rules: Optional[Tuple[QuadratureRule, QuadratureRule]] = None,
                   basis: Optional[ElementBasis] = None) -> ElementBlocks:
    """Local HDG matrices of a straight triangle.

    Args:
        vertices: (3, 2) counterclockwise vertices
        k: polynomial degree
        conductivity: SPD 2 x 2 tensor of the element
        tau: stabilization parameter
        source: f, vectorized over points (zero when omitted)
        faces: (start, end) of each local side in the orientation used by its
            trace unknowns; defaults to (v_j, v_{j+1})
        rules: (triangle rule, edge rule); defaults to quadrature(k)
        basis: precomputed element basis

    Returns:
        ElementBlocks
    """
    vertices = np.asarray(vertices, dtype=float)
    d1, d2 = vertices[1] - vertices[0], vertices[2] - vertices[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    if area < MIN_AREA:
        raise SingularElementError(-1, area)
    tri_rule, edge_rule = rules if rules is not None else quadrature(k)[:2]
    basis = basis if basis is not None else ElementBasis(vertices, k)
    n = basis.size
    K = np.asarray(conductivity, dtype=float)
    kinv = np.linalg.inv(K)

    pts, wts = map_to_triangle(vertices, tri_rule)
    phi = basis.eval(pts)
    grad = basis.grad(pts)
    mass = phi.T @ (wts[:, None] * phi)
    # D[c][j, i] = (d_c phi_j, phi_i)
    D = [grad[:, :, c].T @ (wts[:, None] * phi) for c in range(2)]
    A_qq = np.kron(kinv, mass)
    A_qu = -np.vstack(D)
    B_uq = -np.hstack(D)
    stab_u = np.zeros((n, n))

    centroid = vertices.mean(axis=0)
    if faces is None:
        faces = [(vertices[j], vertices[(j + 1) % 3]) for j in range(3)]
    psi = edge_basis(k, edge_rule.points)
    face_data = []
    for start, end in faces:
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        length = float(np.linalg.norm(end - start))
        normal = _outward(start, end, centroid)
        fpts = start[None] + np.outer(edge_rule.points, end - start)
        fw = length * edge_rule.weights
        fphi = basis.eval(fpts)
        face_data.append(FaceData(start, end, normal, length, edge_rule.points, fpts, fw, psi, fphi))
        gram = fphi.T @ (fw[:, None] * fphi)
        # <phi_i n_c, phi_j>: row j, column (c, i)
        B_uq += np.hstack([normal[0] * gram, normal[1] * gram])
        stab_u += tau * gram

    if source is None:
        fvals = np.zeros(pts.shape[0])
    else:
        fvals = np.asarray(source(pts), dtype=float)
    source_rhs = -(phi.T @ (wts * fvals))
    return ElementBlocks(
        basis=basis, k=k, tau=tau, kinv=kinv, mass=mass, A_qq=A_qq, A_qu=A_qu, B_uq=B_uq,
        stab_u=stab_u, source_rhs=source_rhs, source_integral=float(np.dot(wts, fvals)),
        faces=face_data,
    )


# ---------------------------------------------------------------------------
# Edge blocks


def _check_samples(paths: EdgePaths, k: int) -> np.ndarray:
    theta = paths.theta[paths.interior()]
    expected = gauss_interval(k + 3).points
    if theta.size != expected.size or not np.allclose(theta, expected, atol=1e-14):
        raise PathError(f"Paths of edge {paths.edge} were built for another polynomial degree")
    return theta


def transfer_matrix(paths: EdgePaths, basis: ElementBasis, kinv: np.ndarray, k: int) -> np.ndarray:
    """T[p, (c, i)] with T q = int over the path at sample p of K^-1 E(q) . m ds.

    E(q) is the element polynomial evaluated beyond the element. The segment
    integral uses the (k + 3)-point Gauss rule.
    """
    rule = gauss_interval(k + 3)
    inner = paths.interior()
    origins = paths.origins[inner]
    tangents = paths.tangents[inner]
    lengths = paths.lengths[inner]
    T = np.zeros((origins.shape[0], 2 * basis.size))
    for p, (x, m, L) in enumerate(zip(origins, tangents, lengths)):
        if L <= 0.0:
            continue
        along = x[None] + np.outer(L * rule.points, m)
        T[p] = L * np.kron(kinv @ m, rule.weights @ basis.eval(along))
    return T


def dirichlet_transfer_block(paths: EdgePaths, face: FaceData, basis: ElementBasis,
                             kinv: np.ndarray, k: int,
                             g_D: Callable[[np.ndarray], np.ndarray]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows <mu, lambda> - <mu, int_sigma K^-1 E(q) . m> = <mu, g_D(xbar)> on a dirichlet edge.

    Returns:
        (lambda block (k+1, k+1), q block (k+1, 2n), right-hand side (k+1,))
    """
    _check_samples(paths, k)
    W = face.weights
    psi = face.psi
    T = transfer_matrix(paths, basis, kinv, k)
    data = np.asarray(g_D(paths.endpoints[paths.interior()]), dtype=float)
    return psi.T @ (W[:, None] * psi), -psi.T @ (W[:, None] * T), psi.T @ (W * data)


def extrapolated_flux_matrix(points: np.ndarray, normals: np.ndarray, basis: ElementBasis) -> np.ndarray:
    """N[p, (c, i)] = n_c(p) phi_i(p): normal component of E(q) at off-element points."""
    phi = basis.eval(points)
    return (normals[:, :, None] * phi[:, None, :]).reshape(points.shape[0], -1)


def neumann_extrapolation_block(paths: EdgePaths, face: FaceData, basis: ElementBasis, k: int,
                                normals: np.ndarray,
                                g_N: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Rows int_0^1 (E(q).n)(phi(theta)) mu dtheta = int_0^1 g_N(phi(theta)) mu dtheta, scaled by |e|.

    ``normals`` are the analytic outward normals of the domain at the chart points.

    Returns:
        (q block (k+1, 2n), right-hand side (k+1,))
    """
    _check_samples(paths, k)
    chart_points = paths.endpoints[paths.interior()]
    W = face.weights
    N = extrapolated_flux_matrix(chart_points, normals, basis)
    data = np.asarray(g_N(chart_points, normals), dtype=float)
    return face.psi.T @ (W[:, None] * N), face.psi.T @ (W * data)


def interface_flux_jump_block(paths: EdgePaths, face: FaceData, basis1: ElementBasis,
                              basis2: ElementBasis, k: int, normals: np.ndarray,
                              s_N: Callable[[np.ndarray, np.ndarray], np.ndarray]
                              ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows of (E1(q1) - E2(q2)) . n1 = s_N on the chart of an interface edge.

    ``normals`` point out of region 1 at the chart points.

    Returns:
        (q1 block, q2 block, right-hand side)
    """
    _check_samples(paths, k)
    chart_points = paths.endpoints[paths.interior()]
    W = face.weights
    N1 = extrapolated_flux_matrix(chart_points, normals, basis1)
    N2 = extrapolated_flux_matrix(chart_points, normals, basis2)
    data = np.asarray(s_N(chart_points, normals), dtype=float)
    return face.psi.T @ (W[:, None] * N1), -face.psi.T @ (W[:, None] * N2), face.psi.T @ (W * data)


@dataclass(eq=False)
class InterfaceShift:
    """Transferred jump s_D^h = data + T1 q1 - T2 q2 at the face points of an interface edge."""

    edge: int
    side1: int
    side2: int
    face1: int
    data: np.ndarray
    T1: np.ndarray
    T2: np.ndarray

    def values(self, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
        return self.data + self.T1 @ np.ravel(q1) - self.T2 @ np.ravel(q2)


@dataclass(eq=False)
class InterfaceCoupling:
    shift: InterfaceShift
    q_rows_q1: np.ndarray
    q_rows_q2: np.ndarray
    q_rows_rhs: np.ndarray
    u_rows_q1: np.ndarray
    u_rows_q2: np.ndarray
    u_rows_rhs: np.ndarray


def interface_dirichlet_coupling(paths: EdgePaths, blocks1: ElementBlocks, face1: int,
                                 basis2: ElementBasis, kinv2: np.ndarray, k: int,
                                 s_D: Callable[[np.ndarray], np.ndarray],
                                 side1: int = -1, side2: int = -1) -> InterfaceCoupling:
    """Contributions of the trace shift uhat = lambda + s_D^h to the region-1 element.

    The lambda terms themselves are the ordinary face blocks; this returns the
    extra couplings of the region-1 HDG2/HDG1 rows to q of both elements and
    the data moved to the right-hand side.
    """
    _check_samples(paths, k)
    T1 = transfer_matrix(paths, blocks1.basis, blocks1.kinv, k)
    T2 = transfer_matrix(paths, basis2, kinv2, k)
    data = np.asarray(s_D(paths.endpoints[paths.interior()]), dtype=float)
    Wq = blocks1.face_q_weights(face1)
    Wu = blocks1.face_u_weights(face1)
    shift = InterfaceShift(paths.edge, side1, side2, face1, data, T1, T2)
    return InterfaceCoupling(
        shift=shift,
        q_rows_q1=Wq @ T1, q_rows_q2=-Wq @ T2, q_rows_rhs=-Wq @ data,
        u_rows_q1=Wu @ T1, u_rows_q2=-Wu @ T2, u_rows_rhs=-Wu @ data,
    )


# ---------------------------------------------------------------------------
# Assembly


class _Triplets:
    def __init__(self):
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.vals: List[np.ndarray] = []

    def add(self, rows: np.ndarray, cols: np.ndarray, block: np.ndarray) -> None:
        block = np.asarray(block, dtype=float)
        r, c = np.meshgrid(rows, cols, indexing="ij")
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(block.ravel())

    def matrix(self, size: int) -> csr_matrix:
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, dtype=np.int64)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, dtype=np.int64)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        return coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()


@dataclass(eq=False)
class HdgSystem:
    matrix: csr_matrix
    rhs: np.ndarray
    space: DiscreteSpace
    row_block: np.ndarray
    blocks: List[ElementBlocks]
    shifts: Dict[int, InterfaceShift]
    tau: np.ndarray

    @property
    def k(self) -> int:
        return self.space.k

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    @property
    def labels(self) -> np.ndarray:
        return np.array(BLOCK_NAMES, dtype=object)[self.row_block]

    def block_counts(self) -> Dict[str, int]:
        return {name: int(np.sum(self.row_block == code)) for code, name in enumerate(BLOCK_NAMES)}


def _local_face(mesh: Mesh, t: int, e: int) -> int:
    return int(np.nonzero(mesh.element_edges[t] == e)[0][0])


def check_interface_side(curve: Curve, e: int, face: FaceData) -> None:
    """Raise InterfaceSideError when edge e lies on both sides of the interface.

    The quadrature points and the midpoint are tested; departures up to
    INTERFACE_SIDE_TOL h_e^3 from the curve are accepted on either side.
    """
    points = np.vstack([face.points, 0.5 * (face.start + face.end)])
    values = curve.value(points)
    dist = curve.distance_estimate(points)
    tol = INTERFACE_SIDE_TOL * face.length ** 3
    inside = float(dist[values < 0].max(initial=0.0))
    outside = float(dist[values > 0].max(initial=0.0))
    if min(inside, outside) > tol:
        raise InterfaceSideError(int(e), inside, outside)


def assemble(mesh: Mesh, domain: DomainSpec, family: PathFamily, k: int, data,
             tau_scale: float = 1.0) -> HdgSystem:
    """Assemble the monolithic system over (q_h, u_h, lambda_h).

    Args:
        mesh: classified mesh
        domain: true domain (conductivities, boundary normals)
        family: transfer paths built for degree k
        k: polynomial degree
        data: problem data with ``source(points, region)``,
            ``dirichlet(points, region)``, ``neumann(points, normals, region)``,
            ``jump_value(points)`` and ``jump_flux(points, normals)``
        tau_scale: factor applied to the default stabilization ||K||_2

    Returns:
        HdgSystem
    """
    space = DiscreteSpace(mesh, k)
    size = space.size
    triplets = _Triplets()
    rhs = np.zeros(size)
    row_block = np.empty(size, dtype=np.int64)
    row_block[: space.u_offset] = BLOCK_HDG2
    row_block[space.u_offset: space.lam_offset] = BLOCK_HDG1
    for e in range(mesh.num_edges):
        row_block[space.lam_dofs(e)] = EDGE_BLOCK[int(mesh.edge_class[e])]

    rules = quadrature(k)[:2]
    blocks: List[ElementBlocks] = []
    tau = np.empty(mesh.num_triangles)
    areas = mesh.signed_areas
    for t in range(mesh.num_triangles):
        region = int(mesh.regions[t])
        K = domain.tensor(region)
        tau[t] = stabilization(K, tau_scale)
        faces = [tuple(mesh.vertices[mesh.edges[e]]) for e in mesh.element_edges[t]]
        try:
            blk = element_blocks(mesh.vertices[mesh.triangles[t]], k, K, tau[t],
                                 source=lambda p, r=region: data.source(p, r),
                                 faces=faces, rules=rules, basis=space.bases[t])
        except SingularElementError:
            raise SingularElementError(t, float(areas[t]))
        blocks.append(blk)
        qd, ud = space.q_dofs(t), space.u_dofs(t)
        triplets.add(qd, qd, blk.A_qq)
        triplets.add(qd, ud, blk.A_qu)
        triplets.add(ud, qd, blk.B_uq)
        triplets.add(ud, ud, blk.stab_u)
        rhs[ud] += blk.source_rhs
        for j, e in enumerate(mesh.element_edges[t]):
            ld = space.lam_dofs(e)
            qlam, ulam = blk.qlam(j), blk.ulam(j)
            triplets.add(qd, ld, qlam)
            triplets.add(ud, ld, ulam)
            if mesh.edge_class[e] == EDGE_INTERIOR:
                triplets.add(ld, qd, qlam.T)
                triplets.add(ld, ud, -ulam.T)
                triplets.add(ld, ld, blk.lamlam(j))

    shifts: Dict[int, InterfaceShift] = {}
    for e in np.nonzero(mesh.edge_class != EDGE_INTERIOR)[0]:
        cls = int(mesh.edge_class[e])
        paths = family[e]
        t1 = int(mesh.edge_elements[e, 0])
        j1 = _local_face(mesh, t1, e)
        blk1 = blocks[t1]
        face = blk1.faces[j1]
        ld = space.lam_dofs(e)
        region1 = int(mesh.regions[t1])
        if cls == EDGE_DIRICHLET:
            lam_blk, q_blk, b = dirichlet_transfer_block(
                paths, face, blk1.basis, blk1.kinv, k, lambda p, r=region1: data.dirichlet(p, r))
            triplets.add(ld, ld, lam_blk)
            triplets.add(ld, space.q_dofs(t1), q_blk)
            rhs[ld] += b
        elif cls == EDGE_NEUMANN:
            edge_chart(e, family, mesh)
            _, piece = edge_curve(mesh, domain, e)
            normals = domain.boundary[piece].normals(paths.endpoints[paths.interior()])
            q_blk, b = neumann_extrapolation_block(
                paths, face, blk1.basis, k, normals,
                lambda p, nn, r=region1: data.neumann(p, nn, r))
            triplets.add(ld, space.q_dofs(t1), q_blk)
            rhs[ld] += b
        else:
            check_interface_side(domain.interface, e, face)
            edge_chart(e, family, mesh)
            t2 = int(mesh.edge_elements[e, 1])
            blk2 = blocks[t2]
            chart_points = paths.endpoints[paths.interior()]
            normals = domain.interface.normals(chart_points)
            q1_blk, q2_blk, b = interface_flux_jump_block(
                paths, face, blk1.basis, blk2.basis, k, normals, data.jump_flux)
            triplets.add(ld, space.q_dofs(t1), q1_blk)
            triplets.add(ld, space.q_dofs(t2), q2_blk)
            rhs[ld] += b
            coupling = interface_dirichlet_coupling(
                paths, blk1, j1, blk2.basis, blk2.kinv, k, data.jump_value, side1=t1, side2=t2)
            q1d, q2d, u1d = space.q_dofs(t1), space.q_dofs(t2), space.u_dofs(t1)
            triplets.add(q1d, q1d, coupling.q_rows_q1)
            triplets.add(q1d, q2d, coupling.q_rows_q2)
            triplets.add(u1d, q1d, coupling.u_rows_q1)
            triplets.add(u1d, q2d, coupling.u_rows_q2)
            rhs[q1d] += coupling.q_rows_rhs
            rhs[u1d] += coupling.u_rows_rhs
            shifts[int(e)] = coupling.shift
    matrix = triplets.matrix(size)
    if matrix.shape != (size, size) or rhs.size != size:
        raise AssemblyError(f"System shape {matrix.shape} does not match {size} unknowns")
    system = HdgSystem(matrix, rhs, space, row_block, blocks, shifts, tau)
    logger.info("Assembled k=%d system: %d unknowns, %d nonzeros, rows %s",
                k, size, matrix.nnz, system.block_counts())
    return system


# ---------------------------------------------------------------------------
# Solution


@dataclass(eq=False)
class FieldSolution:
    system: HdgSystem
    coefficients: np.ndarray
    residual: float

    @property
    def space(self) -> DiscreteSpace:
        return self.system.space

    @property
    def mesh(self) -> Mesh:
        return self.system.mesh

    @property
    def k(self) -> int:
        return self.system.k

    @property
    def q(self) -> np.ndarray:
        """Flux coefficients, shape (nt, 2, n)."""
        sp = self.space
        return self.coefficients[: sp.u_offset].reshape(self.mesh.num_triangles, 2, sp.n)

    @property
    def u(self) -> np.ndarray:
        sp = self.space
        return self.coefficients[sp.u_offset: sp.lam_offset].reshape(self.mesh.num_triangles, sp.n)

    @property
    def lam(self) -> np.ndarray:
        sp = self.space
        return self.coefficients[sp.lam_offset:].reshape(self.mesh.num_edges, sp.m)

    def u_at(self, t: int, points: np.ndarray) -> np.ndarray:
        return self.space.bases[t].eval(points) @ self.u[t]

    def q_at(self, t: int, points: np.ndarray) -> np.ndarray:
        return self.space.bases[t].eval(points) @ self.q[t].T

    def shift_values(self, e: int) -> np.ndarray:
        shift = self.system.shifts[int(e)]
        return shift.values(self.q[shift.side1], self.q[shift.side2])

    def face_trace(self, t: int, j: int) -> np.ndarray:
        """uhat at the face points of side j of element t, shifted on region-1 interface faces."""
        e = int(self.mesh.element_edges[t, j])
        face = self.system.blocks[t].faces[j]
        values = face.psi @ self.lam[e]
        shift = self.system.shifts.get(e)
        if shift is not None and shift.side1 == t:
            values = values + self.shift_values(e)
        return values

    def numerical_flux(self, t: int, j: int) -> np.ndarray:
        """qhat . n = q . n + tau (u - uhat) at the face points of side j of element t."""
        face = self.system.blocks[t].faces[j]
        qn = self.q_at(t, face.points) @ face.normal
        return qn + self.system.tau[t] * (self.u_at(t, face.points) - self.face_trace(t, j))


def _diagnose_rows(matrix: csr_matrix, labels: Sequence[str]) -> Tuple[str, Optional[int]]:
    """Block label of the first zero or repeated row, or 'unknown'."""
    matrix = csr_matrix(matrix)
    seen = {}
    for i in range(matrix.shape[0]):
        start, stop = matrix.indptr[i], matrix.indptr[i + 1]
        cols = matrix.indices[start:stop]
        vals = matrix.data[start:stop]
        keep = vals != 0
        cols, vals = cols[keep], vals[keep]
        if cols.size == 0:
            return str(labels[i]), i
        order = np.argsort(cols)
        cols, vals = cols[order], vals[order]
        vals = vals / (np.linalg.norm(vals) * np.sign(vals[0]))
        key = (tuple(cols.tolist()), tuple(np.round(vals, 12).tolist()))
        if key in seen:
            return str(labels[i]), i
        seen[key] = i
    return "unknown", None


def _factorize(matrix: csr_matrix, labels: Sequence[str]):
    try:
        return splu(matrix.tocsc())
    except RuntimeError:
        block, row = _diagnose_rows(matrix, labels)
        raise SingularSystemError(block, row=row)


def _relative_residual(matrix, x: np.ndarray, rhs: np.ndarray) -> float:
    scale = float(np.linalg.norm(rhs))
    residual = float(np.linalg.norm(matrix @ x - rhs))
    return residual / scale if scale > 0 else residual


def _refine(matrix, x: np.ndarray, rhs: np.ndarray, apply: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Iterative refinement x <- x + M^-1 (b - A x) with an approximate inverse M^-1."""
    for _ in range(REFINEMENT_STEPS):
        correction = apply(rhs - matrix @ x)
        if not np.all(np.isfinite(correction)):
            break
        x = x + correction
    return x


def solve_linear(matrix, rhs: np.ndarray, labels: Sequence[str], tol: float = DEFAULT_TOL
                 ) -> Tuple[np.ndarray, float]:
    """Sparse LU solve with the residual contract ||Ax - b|| <= tol ||b||.

    Raises:
        SingularSystemError: factorization failure, non-finite solution or
            residual above tol; carries the block label of a defective row
    """
    matrix = csr_matrix(matrix)
    rhs = np.asarray(rhs, dtype=float)
    lu = _factorize(matrix, labels)
    x = lu.solve(rhs)
    if np.all(np.isfinite(x)):
        x = _refine(matrix, x, rhs, lu.solve)
    if not np.all(np.isfinite(x)):
        block, row = _diagnose_rows(matrix, labels)
        raise SingularSystemError(block, row=row)
    residual = _relative_residual(matrix, x, rhs)
    if residual > tol:
        block, row = _diagnose_rows(matrix, labels)
        raise SingularSystemError(block, row=row, residual=residual)
    return x, residual


def solve(system: HdgSystem, tol: float = DEFAULT_TOL) -> FieldSolution:
    """Monolithic direct solve."""
    x, residual = solve_linear(system.matrix, system.rhs, system.labels, tol)
    logger.info("Monolithic solve: %d unknowns, relative residual %.3e", x.size, residual)
    return FieldSolution(system, x, residual)


def solve_condensed(system: HdgSystem, tol: float = DEFAULT_TOL) -> FieldSolution:
    """Solve by eliminating (q_h, u_h) element by element.

    The interior block is D + N with D block diagonal per element and N the
    region-1 to region-2 flux coupling of interface shifts. N D^-1 N = 0, so
    (D + N)^-1 = (I - D^-1 N) D^-1. The condensed solve is refined against the
    full matrix, so it agrees with the monolithic solve to round-off.
    """
    space = system.space
    mesh = space.mesh
    nx = space.lam_offset
    A = system.matrix.tocsr()
    Axx, Axl = A[:nx, :nx], A[:nx, nx:]
    Alx, All = A[nx:, :nx], A[nx:, nx:]

    inv_blocks = _Triplets()
    diag_blocks = _Triplets()
    areas = mesh.signed_areas
    for t in range(mesh.num_triangles):
        idx = space.element_dofs(t)
        local = Axx[idx][:, idx].toarray()
        try:
            local_inv = np.linalg.solve(local, np.eye(idx.size))
        except np.linalg.LinAlgError:
            raise SingularElementError(t, float(areas[t]))
        inv_blocks.add(idx, idx, local_inv)
        diag_blocks.add(idx, idx, local)
    Dinv = inv_blocks.matrix(nx)
    N = (Axx - diag_blocks.matrix(nx)).tocsr()
    N.eliminate_zeros()

    Axx_inv = (Dinv - (Dinv @ N) @ Dinv).tocsr() if N.nnz else Dinv
    schur = (All - Alx @ (Axx_inv @ Axl)).tocsr()
    lu = _factorize(schur, system.labels[nx:])

    def condensed_solve(b: np.ndarray) -> np.ndarray:
        bx, bl = b[:nx], b[nx:]
        lam = lu.solve(bl - Alx @ (Axx_inv @ bx))
        return np.concatenate([Axx_inv @ (bx - Axl @ lam), lam])

    z = condensed_solve(system.rhs)
    if np.all(np.isfinite(z)):
        z = _refine(A, z, system.rhs, condensed_solve)
    if not np.all(np.isfinite(z)):
        block, row = _diagnose_rows(schur, system.labels[nx:])
        raise SingularSystemError(block, row=row)
    residual = _relative_residual(A, z, system.rhs)
    if residual > tol:
        raise SingularSystemError("unknown", residual=residual)
    logger.info("Condensed solve: %d trace unknowns, relative residual %.3e", z.size - nx, residual)
    return FieldSolution(system, z, residual)


# ---------------------------------------------------------------------------
# Conservation


def local_conservation(solution: FieldSolution) -> np.ndarray:
    """Per element <qhat . n, 1> over the boundary plus (f, 1)."""
    mesh = solution.mesh
    out = np.empty(mesh.num_triangles)
    for t, blk in enumerate(solution.system.blocks):
        total = blk.source_integral
        for j, face in enumerate(blk.faces):
            total += float(np.dot(face.weights, solution.numerical_flux(t, j)))
        out[t] = total
    return out


def conservation_summary(residuals: np.ndarray, mesh: Mesh) -> Dict[str, float]:
    """Maxima over elements with standard edges only and over elements touching neumann/interface edges."""
    modified = np.isin(mesh.edge_class[mesh.element_edges], (EDGE_NEUMANN, EDGE_INTERFACE)).any(axis=1)
    standard = np.abs(residuals[~modified])
    special = np.abs(residuals[modified])
    return {
        "standard_max": float(standard.max()) if standard.size else 0.0,
        "modified_max": float(special.max()) if special.size else 0.0,
    }
