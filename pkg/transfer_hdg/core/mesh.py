"""
Straight-triangle computational domains.

Meshes either sit O(h) inside the true domain (immersed background grids) or
interpolate the true boundary and interface with polylines (O(h^2)). Edges
carry a class: interior, dirichlet, neumann or interface.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from transfer_hdg.core.errors import (
    DisconnectedMeshError,
    EmptyMeshError,
    InvariantViolationError,
    MeshError,
    MeshingError,
    MeshParseError,
    MixedEdgeError,
    NoIntersectionError,
)
from transfer_hdg.core.geometry import (
    DIRICHLET,
    NEUMANN,
    DomainSpec,
    PolygonCurve,
    closest_point,
    nearest_normal_hit,
)
from transfer_hdg.utils.file_utils import check_file_writeable

logger = logging.getLogger(__name__)

EDGE_INTERIOR = 0
EDGE_DIRICHLET = 1
EDGE_NEUMANN = 2
EDGE_INTERFACE = 3
EDGE_CLASS_NAMES = {
    EDGE_INTERIOR: "interior",
    EDGE_DIRICHLET: "dirichlet",
    EDGE_NEUMANN: "neumann",
    EDGE_INTERFACE: "interface",
}


@dataclass(eq=False)
class Mesh:
    """Triangles with region labels and classified, deduplicated edges.

    Derived connectivity (built on construction):
        edge_elements: (ne, 2) adjacent triangles, -1 for a missing neighbour;
            interface edges list the region-1 triangle first
        element_edges: (nt, 3) edge of local side j = (v_j, v_{j+1})
    """

    vertices: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    edges: np.ndarray
    edge_class: np.ndarray
    edge_elements: np.ndarray = field(init=False, repr=False)
    element_edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.regions = np.asarray(self.regions, dtype=np.int64).reshape(-1)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.edge_class = np.asarray(self.edge_class, dtype=np.int64).reshape(-1)
        self._build_connectivity()

    def _build_connectivity(self):
        nt = self.triangles.shape[0]
        ne = self.edges.shape[0]
        lookup = {}
        for idx, (a, b) in enumerate(self.edges):
            key = (min(a, b), max(a, b))
            if key in lookup:
                raise InvariantViolationError("edge-uniqueness", f"edge {key} listed twice")
            lookup[key] = idx
        self.edge_elements = -np.ones((ne, 2), dtype=np.int64)
        self.element_edges = np.empty((nt, 3), dtype=np.int64)
        for t, tri in enumerate(self.triangles):
            for j in range(3):
                a, b = tri[j], tri[(j + 1) % 3]
                key = (min(a, b), max(a, b))
                if key not in lookup:
                    raise InvariantViolationError(
                        "edge-incidence", f"side ({a}, {b}) of triangle {t} is not in the edge list")
                e = lookup[key]
                self.element_edges[t, j] = e
                slot = 0 if self.edge_elements[e, 0] < 0 else 1
                if slot == 1 and self.edge_elements[e, 1] >= 0:
                    raise InvariantViolationError("edge-incidence", f"edge {e} has more than two triangles")
                self.edge_elements[e, slot] = t
        for e in np.nonzero(self.edge_class == EDGE_INTERFACE)[0]:
            k0, k1 = self.edge_elements[e]
            if k1 >= 0 and self.regions[k0] == 2 and self.regions[k1] == 1:
                self.edge_elements[e] = (k1, k0)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return all(
            a.dtype == b.dtype and np.array_equal(a, b)
            for a, b in (
                (self.vertices, other.vertices),
                (self.triangles, other.triangles),
                (self.regions, other.regions),
                (self.edges, other.edges),
                (self.edge_class, other.edge_class),
            )
        )

    # -- geometry ---------------------------------------------------------------
    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        sides = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
        return sides.max(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.nonzero(self.edge_elements[:, 1] < 0)[0]

    def edges_of_class(self, cls: int) -> np.ndarray:
        return np.nonzero(self.edge_class == cls)[0]

    def edge_points(self, e: int, theta) -> np.ndarray:
        a, b = self.vertices[self.edges[e]]
        theta = np.asarray(theta, dtype=float)
        return a[None] + theta.reshape(-1, 1) * (b - a)[None]

    def edge_normal(self, e: int, element: int) -> np.ndarray:
        """Unit normal of edge e pointing out of the given triangle."""
        a, b = self.vertices[self.edges[e]]
        d = b - a
        n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
        centroid = self.vertices[self.triangles[element]].mean(axis=0)
        if np.dot(n, 0.5 * (a + b) - centroid) < 0:
            n = -n
        return n

    def with_classes(self, edge_class: np.ndarray) -> "Mesh":
        return Mesh(self.vertices.copy(), self.triangles.copy(), self.regions.copy(),
                    self.edges.copy(), np.asarray(edge_class, dtype=np.int64))

    def summary(self) -> dict:
        counts = {name: int(np.sum(self.edge_class == cls)) for cls, name in EDGE_CLASS_NAMES.items()}
        return {"vertices": self.num_vertices, "triangles": self.num_triangles,
                "edges": self.num_edges, "h": self.h, **counts}


def check_invariants(mesh: Mesh) -> None:
    """Raise InvariantViolationError naming the first failing invariant."""
    if mesh.num_triangles == 0:
        raise InvariantViolationError("non-empty", "mesh has no triangles")
    if mesh.triangles.min() < 0 or mesh.triangles.max() >= mesh.num_vertices:
        raise InvariantViolationError("vertex-index", "triangle references a missing vertex")
    areas = mesh.signed_areas
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise InvariantViolationError("positive-area", f"triangle {bad} has signed area {areas[bad]:.3e}")
    if not np.all(np.isin(mesh.regions, (1, 2))):
        raise InvariantViolationError("region-label", "regions must be 1 or 2")
    if not np.all(np.isin(mesh.edge_class, tuple(EDGE_CLASS_NAMES))):
        raise InvariantViolationError("edge-class", "edge classes must be 0..3")
    two_sided = mesh.edge_elements[:, 1] >= 0
    for e in range(mesh.num_edges):
        cls = mesh.edge_class[e]
        if mesh.edge_elements[e, 0] < 0:
            raise InvariantViolationError("edge-incidence", f"edge {e} belongs to no triangle")
        if cls in (EDGE_INTERIOR, EDGE_INTERFACE) and not two_sided[e]:
            raise InvariantViolationError("edge-incidence", f"{EDGE_CLASS_NAMES[cls]} edge {e} has one triangle")
        if cls in (EDGE_DIRICHLET, EDGE_NEUMANN) and two_sided[e]:
            raise InvariantViolationError("edge-incidence", f"boundary edge {e} has two triangles")
        if two_sided[e]:
            r0, r1 = mesh.regions[mesh.edge_elements[e]]
            if cls == EDGE_INTERFACE and r0 == r1:
                raise InvariantViolationError("interface-regions", f"interface edge {e} inside region {r0}")
            if cls == EDGE_INTERIOR and r0 != r1:
                raise InvariantViolationError("interface-regions", f"interior edge {e} separates regions")
    counts = np.bincount(mesh.element_edges.ravel(), minlength=mesh.num_edges)
    if np.any(counts > 2):
        e = int(np.argmax(counts))
        raise InvariantViolationError("edge-incidence", f"edge {e} has {counts[e]} triangles")
    hanging = _hanging_vertex(mesh)
    if hanging is not None:
        e, v = hanging
        raise InvariantViolationError("conforming", f"vertex {v} lies inside edge {e}")


def _hanging_vertex(mesh: Mesh, tol: float = 1e-10) -> Optional[Tuple[int, int]]:
    """First (edge, vertex) pair with the vertex strictly inside the edge."""
    tree = cKDTree(mesh.vertices)
    lengths = mesh.edge_lengths
    for e, (a, b) in enumerate(mesh.edges):
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        d = pb - pa
        for v in tree.query_ball_point(0.5 * (pa + pb), 0.5 * lengths[e] * (1.0 + tol)):
            if v == a or v == b:
                continue
            rel = mesh.vertices[v] - pa
            s = float(np.dot(rel, d)) / lengths[e] ** 2
            offset = abs(d[0] * rel[1] - d[1] * rel[0]) / lengths[e]
            if tol < s < 1.0 - tol and offset <= tol * lengths[e]:
                return e, int(v)
    return None


def mesh_from_triangles(vertices: np.ndarray, triangles: np.ndarray,
                        regions: Optional[np.ndarray] = None) -> Mesh:
    """Build a Mesh, orienting triangles counterclockwise and deriving edges.

    Boundary edges start as dirichlet until classify_edges runs; edges between
    different regions are interface edges.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64).copy()
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    flip = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    if regions is None:
        regions = np.ones(triangles.shape[0], dtype=np.int64)
    regions = np.asarray(regions, dtype=np.int64)

    sides = np.sort(np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)
    owner = np.tile(np.arange(triangles.shape[0]), 3)
    edges, inverse, counts = np.unique(sides, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    edge_class = np.where(counts == 2, EDGE_INTERIOR, EDGE_DIRICHLET)
    first = -np.ones(edges.shape[0], dtype=np.int64)
    for idx, e in enumerate(inverse):
        if first[e] < 0:
            first[e] = owner[idx]
        elif regions[first[e]] != regions[owner[idx]]:
            edge_class[e] = EDGE_INTERFACE
    return Mesh(vertices, triangles, regions, edges, edge_class)


def _compact(vertices: np.ndarray, triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    used = np.unique(triangles)
    remap = -np.ones(vertices.shape[0], dtype=np.int64)
    remap[used] = np.arange(used.size)
    return vertices[used], remap[triangles]


def count_components(mesh: Mesh) -> int:
    inner = mesh.edge_elements[mesh.edge_elements[:, 1] >= 0]
    nt = mesh.num_triangles
    adj = coo_matrix((np.ones(inner.shape[0]), (inner[:, 0], inner[:, 1])), shape=(nt, nt))
    ncomp, _ = connected_components(adj, directed=False)
    return int(ncomp)


def _grid(x0: float, y0: float, nx: int, ny: int, hx: float, hy: float) -> Tuple[np.ndarray, np.ndarray]:
    xs = x0 + hx * np.arange(nx + 1)
    ys = y0 + hy * np.arange(ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])
    tris = []
    for j in range(ny):
        for i in range(nx):
            v00 = j * (nx + 1) + i
            v10 = v00 + 1
            v01 = v00 + nx + 1
            v11 = v01 + 1
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return vertices, np.array(tris, dtype=np.int64)


def generate_square_grid(domain: Sequence[float] = (0.0, 1.0, 0.0, 1.0), n: int = 1) -> Mesh:
    """Uniform n x n grid of the rectangle (x0, x1, y0, y1), two triangles per cell."""
    if n < 1:
        raise MeshError(f"Cells per side must be at least 1, got {n}")
    x0, x1, y0, y1 = domain
    vertices, tris = _grid(x0, y0, n, n, (x1 - x0) / n, (y1 - y0) / n)
    return mesh_from_triangles(vertices, tris)


def generate_immersed(domain: DomainSpec, h_b: float, inset: Optional[float] = None) -> Mesh:
    """Keep the background triangles lying strictly inside the domain.

    The background grid has spacing h_b and its lines sit at the bounding-box
    minimum plus ``inset`` (default h_b), so for a grid-aligned square the kept
    region is the square shrunk by the inset on every side. A triangle is kept
    when its vertices and edge midpoints all have domain value below
    -1e-10 h_b.
    """
    inset = h_b if inset is None else inset
    x0, x1, y0, y1 = domain.bounding_box()
    start_x = x0 + inset - h_b * np.floor(inset / h_b)
    start_y = y0 + inset - h_b * np.floor(inset / h_b)
    nx = int(np.ceil((x1 - start_x) / h_b))
    ny = int(np.ceil((y1 - start_y) / h_b))
    vertices, tris = _grid(start_x, start_y, nx, ny, h_b, h_b)
    tol = -1e-10 * h_b
    vinside = domain.value(vertices) < tol
    keep = np.all(vinside[tris], axis=1)
    cand = tris[keep]
    mids = 0.5 * (vertices[cand] + vertices[cand[:, [1, 2, 0]]])
    mid_ok = (domain.value(mids.reshape(-1, 2)) < tol).reshape(-1, 3).all(axis=1)
    cand = cand[mid_ok]
    if cand.shape[0] == 0:
        raise EmptyMeshError(f"No background triangle of size {h_b} lies inside {domain.name}")
    verts, tris = _compact(vertices, cand)
    mesh = mesh_from_triangles(verts, tris)
    ncomp = count_components(mesh)
    if ncomp > 1:
        raise DisconnectedMeshError(ncomp)
    logger.info("Immersed mesh of %s: %d triangles, h=%.4g", domain.name, mesh.num_triangles, mesh.h)
    return mesh


def generate_annulus(center: Sequence[float], r_inner: float, r_outer: float,
                     n_theta: int, n_radial: int, inset: float = 0.0) -> Mesh:
    """Structured mapped polar grid between two concentric circles.

    With inset 0 every ring vertex lies on its circle; a positive inset shrinks
    both rings toward each other, giving an O(inset) concentric construction.
    """
    if n_theta < 3 or n_radial < 1:
        raise MeshError("Annulus needs n_theta >= 3 and n_radial >= 1")
    radii = np.linspace(r_inner + inset, r_outer - inset, n_radial + 1)
    angles = 2.0 * np.pi * np.arange(n_theta) / n_theta
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    vertices = np.column_stack([center[0] + (rr * np.cos(aa)).ravel(),
                                center[1] + (rr * np.sin(aa)).ravel()])
    tris = []
    for i in range(n_radial):
        for j in range(n_theta):
            jn = (j + 1) % n_theta
            a, b = i * n_theta + j, (i + 1) * n_theta + j
            c, d = (i + 1) * n_theta + jn, i * n_theta + jn
            tris.append((a, b, c))
            tris.append((a, c, d))
    return mesh_from_triangles(vertices, np.array(tris, dtype=np.int64))


def _node_counts(curves, nodes: Union[int, Sequence[int]]):
    if isinstance(nodes, (int, np.integer)):
        perimeters = np.array([c.perimeter for c in curves])
        spacing = perimeters.max() / nodes
        counts = [max(8, int(round(p / spacing))) for p in perimeters]
    else:
        counts = [int(c) for c in nodes]
        if len(counts) != len(curves):
            raise MeshError(f"Expected {len(curves)} node counts, got {len(counts)}")
    if min(counts) < 8:
        raise MeshError("Every closed curve needs at least 8 nodes")
    return counts


def generate_interpolated(domain: DomainSpec, nodes: Union[int, Sequence[int]]) -> Mesh:
    """Constrained triangulation of polylines interpolating the true curves.

    Args:
        domain: The domain (boundary pieces and optional interface)
        nodes: Node count on the longest curve (others scale with perimeter),
            or one count per curve (boundary pieces first, then the interface)

    Returns:
        Mesh whose boundary and interface vertices lie on the true curves;
        triangles inside the interpolated interface get region 1.
    """
    import triangle

    curves = list(domain.curves())
    counts = _node_counts(curves, nodes)
    points, segments = [], []
    offset = 0
    curve_nodes = []
    for curve, count in zip(curves, counts):
        pts = curve.nodes(count)
        curve_nodes.append(pts)
        points.append(pts)
        idx = offset + np.arange(count)
        segments.append(np.column_stack([idx, np.roll(idx, -1)]))
        offset += count
    holes = [p.curve.interior_point() for p in domain.boundary if not p.domain_inside]
    spacing = max(c.perimeter / n for c, n in zip(curves, counts))
    max_area = np.sqrt(3.0) / 4.0 * spacing ** 2
    tri_input = {"vertices": np.vstack(points), "segments": np.vstack(segments)}
    if holes:
        tri_input["holes"] = np.array(holes)
    options = f"pq30YYa{max_area:.12g}Q"
    try:
        output = triangle.triangulate(tri_input, options)
    except Exception as exc:  # the C mesher raises bare RuntimeErrors
        raise MeshingError(f"Triangulation of {domain.name} failed: {exc}") from exc
    if "triangles" not in output or len(output["triangles"]) == 0:
        raise MeshingError(f"Triangulation of {domain.name} produced no triangles")
    vertices = np.asarray(output["vertices"], dtype=float)
    tris = np.asarray(output["triangles"], dtype=np.int64)
    regions = None
    if domain.interface is not None:
        sigma_h = PolygonCurve(tuple(map(tuple, curve_nodes[-1])))
        centroids = vertices[tris].mean(axis=1)
        regions = np.where(sigma_h.contains(centroids), 1, 2)
    mesh = mesh_from_triangles(vertices, tris, regions)
    logger.info("Interpolated mesh of %s: %d triangles, h=%.4g (options %s)",
                domain.name, mesh.num_triangles, mesh.h, options)
    return mesh


def _transfer_points(mesh: Mesh, e: int, curve, samples: Sequence[float]) -> np.ndarray:
    element = mesh.edge_elements[e, 0]
    n = mesh.edge_normal(e, element)
    reach = 10.0 * mesh.diameters[element]
    out = []
    for x in mesh.edge_points(e, samples):
        try:
            out.append(nearest_normal_hit(curve, x, n, reach))
        except NoIntersectionError:
            out.append(closest_point(curve, x)[0])
    return np.array(out)


def classify_edges(mesh: Mesh, domain: DomainSpec,
                   samples: Sequence[float] = (1e-6, 0.5, 1.0 - 1e-6)) -> Mesh:
    """Assign interior/interface/dirichlet/neumann classes.

    Boundary edges take the condition of the nearest boundary piece, evaluated
    where normal rays from the sample points meet the true curve; an edge whose
    samples disagree raises MixedEdgeError.
    """
    classes = np.empty(mesh.num_edges, dtype=np.int64)
    ee = mesh.edge_elements
    inner = ee[:, 1] >= 0
    same = np.ones(mesh.num_edges, dtype=bool)
    same[inner] = mesh.regions[ee[inner, 0]] == mesh.regions[ee[inner, 1]]
    classes[inner] = np.where(same[inner], EDGE_INTERIOR, EDGE_INTERFACE)
    boundary = np.nonzero(~inner)[0]
    if boundary.size:
        mids = 0.5 * (mesh.vertices[mesh.edges[boundary, 0]] + mesh.vertices[mesh.edges[boundary, 1]])
        pieces = domain.nearest_piece(mids)
        for e, piece_idx in zip(boundary, pieces):
            piece = domain.boundary[piece_idx]
            if isinstance(piece.condition, str):
                labels = {piece.condition}
            else:
                labels = set(piece.conditions(_transfer_points(mesh, e, piece.curve, samples)))
            if len(labels) > 1:
                raise MixedEdgeError(int(e), sorted(labels))
            classes[e] = EDGE_NEUMANN if labels.pop() == NEUMANN else EDGE_DIRICHLET
    classified = mesh.with_classes(classes)
    logger.debug("Edge classes: %s", classified.summary())
    return classified


# ---------------------------------------------------------------------------
# Text format


def write_mesh(mesh: Mesh, path: str) -> str:
    """Write the line-oriented text format (floats in shortest round-trip form)."""
    ok, message = check_file_writeable(path)
    if not ok:
        raise MeshError(f"Cannot write mesh: {message}")
    lines = ["# transfer_hdg mesh: nv nt ne / x y / i j k region / a b class",
             f"{mesh.num_vertices} {mesh.num_triangles} {mesh.num_edges}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines += [f"{i} {j} {k} {r}" for (i, j, k), r in zip(mesh.triangles, mesh.regions)]
    lines += [f"{a} {b} {c}" for (a, b), c in zip(mesh.edges, mesh.edge_class)]
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
    return path


def read_mesh(path: str) -> Mesh:
    """Parse the text format and check every mesh invariant."""
    with open(path, encoding="utf-8") as handle:
        raw = handle.read().split("\n")
    records = [(no, line.split()) for no, line in enumerate(raw, start=1)
               if line.strip() and not line.lstrip().startswith("#")]
    if not records:
        raise MeshParseError("empty mesh file", line=1)

    def parse(record, count, kind, caster):
        no, fields = record
        if len(fields) != count:
            raise MeshParseError(f"expected {count} fields for {kind}, found {len(fields)}", line=no)
        try:
            return [caster(f) for f in fields]
        except ValueError as exc:
            raise MeshParseError(f"bad {kind} entry: {exc}", line=no) from exc

    nv, nt, ne = parse(records[0], 3, "header", int)
    expected = 1 + nv + nt + ne
    if len(records) < expected:
        last = records[-1][0] if records else 0
        raise MeshParseError(f"unexpected end of file, {expected - len(records)} records missing",
                             line=last + 1)
    if len(records) > expected:
        raise MeshParseError("trailing records after the edge block", line=records[expected][0])
    body = records[1:]
    vertices = [parse(r, 2, "vertex", float) for r in body[:nv]]
    tri_rows = [parse(r, 4, "triangle", int) for r in body[nv:nv + nt]]
    edge_rows = [parse(r, 3, "edge", int) for r in body[nv + nt:]]
    tri_arr = np.array(tri_rows, dtype=np.int64).reshape(-1, 4)
    edge_arr = np.array(edge_rows, dtype=np.int64).reshape(-1, 3)
    if tri_arr.size and (tri_arr[:, :3].min() < 0 or tri_arr[:, :3].max() >= nv):
        raise InvariantViolationError("vertex-index", "triangle references a missing vertex")
    mesh = Mesh(np.array(vertices, dtype=float).reshape(-1, 2), tri_arr[:, :3], tri_arr[:, 3],
                edge_arr[:, :2], edge_arr[:, 2])
    check_invariants(mesh)
    return mesh
