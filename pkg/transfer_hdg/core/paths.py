"""
Transfer paths from the computational boundary (or interface) to the true curve.

Two families are supported:

* ``p2``: every sample point of an edge follows the edge normal to the
  nearest crossing with the true curve;
* ``p1``: every boundary vertex goes to its closest curve point, and points
  inside an edge follow the convex combination of the two vertex
  displacements.

Each edge keeps its own copy of the vertex paths so that the P2 family stays
consistent with the edge normal.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from transfer_hdg.core.errors import (
    CrossingError,
    FoldBackError,
    NoIntersectionError,
    PathError,
    PathLengthError,
    RayMissError,
)
from transfer_hdg.core.geometry import Curve, DomainSpec, closest_point, nearest_normal_hit
from transfer_hdg.core.mesh import EDGE_DIRICHLET, EDGE_INTERFACE, EDGE_NEUMANN, Mesh
from transfer_hdg.core.quadrature import gauss_interval

logger = logging.getLogger(__name__)

STRATEGIES = ("p1", "p2")
RAY_REACH = 2.0
RAY_RETRY_REACH = 10.0
LONG_PATH = 2.0
MAX_PATH = 10.0
ON_CURVE_CHART_TOL = 1e-8
ZERO_LENGTH = 1e-14


def sample_thetas(k: int) -> np.ndarray:
    """Edge parameters carrying paths: both vertices plus the k + 3 Gauss points."""
    return np.concatenate([[0.0], gauss_interval(k + 3).points, [1.0]])


@dataclass(frozen=True, eq=False)
class TransferPath:
    """Straight segment from origin (on the computational curve) to endpoint."""

    origin: np.ndarray
    endpoint: np.ndarray
    tangent: np.ndarray
    length: float

    @classmethod
    def between(cls, origin, endpoint, fallback_direction) -> "TransferPath":
        origin = np.asarray(origin, dtype=float)
        endpoint = np.asarray(endpoint, dtype=float)
        d = endpoint - origin
        length = float(np.linalg.norm(d))
        if length <= ZERO_LENGTH:
            tangent = np.asarray(fallback_direction, dtype=float)
            tangent = tangent / np.linalg.norm(tangent)
        else:
            tangent = d / length
        return cls(origin, endpoint, tangent, length)

    def points(self, t: np.ndarray) -> np.ndarray:
        """Points origin + t |sigma| m for t in [0, 1]."""
        return self.origin[None] + np.outer(np.asarray(t, dtype=float) * self.length, self.tangent)


@dataclass(eq=False)
class EdgePaths:
    """Transfer paths of one edge at the parameters ``theta``.

    Args:
        edge: global edge index
        curve: the true curve reached by the paths
        normal: unit normal of the edge, outward for the boundary element and
            pointing from region 1 into region 2 on interface edges
        theta: parameters of the sample points (vertices included)
        origins: (ns, 2) points on the edge
        endpoints: (ns, 2) points reached on the curve
    """

    edge: int
    curve: Curve
    normal: np.ndarray
    theta: np.ndarray
    origins: np.ndarray
    endpoints: np.ndarray

    @property
    def displacements(self) -> np.ndarray:
        return self.endpoints - self.origins

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.displacements, axis=1)

    @property
    def tangents(self) -> np.ndarray:
        d = self.displacements
        lengths = self.lengths
        out = np.tile(self.normal, (d.shape[0], 1))
        moving = lengths > ZERO_LENGTH
        out[moving] = d[moving] / lengths[moving, None]
        return out

    def path(self, i: int) -> TransferPath:
        return TransferPath.between(self.origins[i], self.endpoints[i], self.normal)

    def interior(self) -> slice:
        """Slice of the sample points strictly inside the edge (the quadrature points)."""
        return slice(1, self.theta.size - 1)

    def __len__(self) -> int:
        return int(self.theta.size)


@dataclass(eq=False)
class PathFamily:
    strategy: str
    edges: Dict[int, EdgePaths] = field(default_factory=dict)
    fallbacks: int = 0

    def __getitem__(self, e: int) -> EdgePaths:
        try:
            return self.edges[int(e)]
        except KeyError as exc:
            raise PathError(f"No transfer paths stored for edge {e}") from exc

    def __contains__(self, e) -> bool:
        return int(e) in self.edges

    def __iter__(self) -> Iterator[EdgePaths]:
        return iter(self.edges[e] for e in sorted(self.edges))

    def __len__(self) -> int:
        return len(self.edges)

    def records(self) -> Iterator[Tuple[int, float, float, float, float, float, float]]:
        """Rows of the path dump: edge_id, theta, x, y, xbar, ybar, length."""
        for paths in self:
            for th, x, xb, ln in zip(paths.theta, paths.origins, paths.endpoints, paths.lengths):
                yield paths.edge, th, x[0], x[1], xb[0], xb[1], ln


# ---------------------------------------------------------------------------
# Construction


def transfer_edges(mesh: Mesh) -> np.ndarray:
    """Edges needing paths: dirichlet, neumann and interface edges."""
    return np.nonzero(np.isin(mesh.edge_class, (EDGE_DIRICHLET, EDGE_NEUMANN, EDGE_INTERFACE)))[0]


def edge_curve(mesh: Mesh, domain: DomainSpec, e: int) -> Tuple[Curve, int]:
    """True curve facing edge e and the boundary piece index (-1 for the interface)."""
    if mesh.edge_class[e] == EDGE_INTERFACE:
        if domain.interface is None:
            raise PathError(f"Interface edge {e} in a domain without interface")
        return domain.interface, -1
    mid = mesh.edge_points(e, [0.5])
    piece = int(domain.nearest_piece(mid)[0])
    return domain.boundary[piece].curve, piece


def edge_reference_normal(mesh: Mesh, e: int) -> np.ndarray:
    """Outward normal of the boundary element, or of the region-1 element on interfaces."""
    return mesh.edge_normal(e, mesh.edge_elements[e, 0])


def _reference_size(mesh: Mesh, e: int) -> float:
    elements = mesh.edge_elements[e]
    return float(mesh.diameters[elements[elements >= 0]].max())


def normal_hit(curve: Curve, x: np.ndarray, n: np.ndarray, h: float, edge: int, theta: float,
               fallback: bool = False) -> Tuple[np.ndarray, bool]:
    """Nearest hit of the normal line through x, widening the search once.

    Returns the hit and whether the closest-point fallback was used.
    """
    try:
        return nearest_normal_hit(curve, x, n, RAY_REACH * h), False
    except NoIntersectionError:
        pass
    try:
        hit = nearest_normal_hit(curve, x, n, RAY_RETRY_REACH * h)
        logger.warning("Edge %d, theta=%.4f: normal ray needed the extended reach %.3g",
                       edge, theta, RAY_RETRY_REACH * h)
        return hit, False
    except NoIntersectionError:
        if not fallback:
            raise RayMissError(edge, theta, RAY_RETRY_REACH * h)
    logger.warning("Edge %d, theta=%.4f: normal ray missed, using the closest point", edge, theta)
    return closest_point(curve, x)[0], True


def _segments_cross(a0, a1, b0, b1, tol: float = 1e-12) -> bool:
    """Proper crossing of segments [a0, a1] and [b0, b1] (touching does not count)."""
    da = a1 - a0
    db = b1 - b0
    scale = max(np.linalg.norm(da), np.linalg.norm(db), 1e-300)
    if np.linalg.norm(da) <= ZERO_LENGTH or np.linalg.norm(db) <= ZERO_LENGTH:
        return False

    def orient(p, q, r):
        return ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])) / scale ** 2

    o1 = orient(a0, a1, b0)
    o2 = orient(a0, a1, b1)
    o3 = orient(b0, b1, a0)
    o4 = orient(b0, b1, a1)
    return o1 * o2 < -tol and o3 * o4 < -tol


def _build_p2(mesh, domain, edges, theta, fallback) -> PathFamily:
    family = PathFamily("p2")
    for e in edges:
        curve, _ = edge_curve(mesh, domain, e)
        n = edge_reference_normal(mesh, e)
        h = _reference_size(mesh, e)
        origins = mesh.edge_points(e, theta)
        endpoints = np.empty_like(origins)
        for i, (th, x) in enumerate(zip(theta, origins)):
            endpoints[i], used = normal_hit(curve, x, n, h, int(e), float(th), fallback)
            family.fallbacks += int(used)
        family.edges[int(e)] = EdgePaths(int(e), curve, n, theta.copy(), origins, endpoints)
    return family


def _build_p1(mesh, domain, edges, theta) -> PathFamily:
    vertex_hit: Dict[int, np.ndarray] = {}
    for e in edges:
        curve, _ = edge_curve(mesh, domain, e)
        for v in mesh.edges[e]:
            if int(v) not in vertex_hit:
                vertex_hit[int(v)] = closest_point(curve, mesh.vertices[v])[0]

    def crossing(e):
        a, b = mesh.edges[e]
        return _segments_cross(mesh.vertices[a], vertex_hit[int(a)], mesh.vertices[b], vertex_hit[int(b)])

    repaired = 0
    for e in edges:
        if not crossing(e):
            continue
        curve, _ = edge_curve(mesh, domain, e)
        n = edge_reference_normal(mesh, e)
        h = _reference_size(mesh, e)
        for v in mesh.edges[e]:
            try:
                vertex_hit[int(v)] = nearest_normal_hit(curve, mesh.vertices[v], n, RAY_RETRY_REACH * h)
            except NoIntersectionError:
                raise CrossingError([tuple(int(x) for x in mesh.edges[e])])
        repaired += 1
    still = [tuple(int(x) for x in mesh.edges[e]) for e in edges if crossing(e)]
    if still:
        raise CrossingError(still)
    if repaired:
        logger.info("P1 crossing repair replaced the vertex paths of %d edges", repaired)

    family = PathFamily("p1")
    for e in edges:
        curve, _ = edge_curve(mesh, domain, e)
        n = edge_reference_normal(mesh, e)
        a, b = mesh.edges[e]
        d_a = vertex_hit[int(a)] - mesh.vertices[a]
        d_b = vertex_hit[int(b)] - mesh.vertices[b]
        origins = mesh.edge_points(e, theta)
        endpoints = origins + np.outer(1.0 - theta, d_a) + np.outer(theta, d_b)
        family.edges[int(e)] = EdgePaths(int(e), curve, n, theta.copy(), origins, endpoints)
    return family


def build_paths(mesh: Mesh, domain: DomainSpec, strategy: str = "p2", k: int = 0,
                theta: Optional[Sequence[float]] = None, fallback: bool = False) -> PathFamily:
    """Build the transfer paths of every dirichlet, neumann and interface edge.

    Args:
        mesh: classified mesh
        domain: the true domain
        strategy: "p1" or "p2"
        k: polynomial degree; fixes the default sample parameters
        theta: explicit sample parameters (must start at 0 and end at 1)
        fallback: allow closest-point paths where a P2 normal ray misses

    Returns:
        PathFamily keyed by edge index
    """
    if strategy not in STRATEGIES:
        raise PathError(f"Unknown path strategy '{strategy}', expected one of {STRATEGIES}")
    theta = sample_thetas(k) if theta is None else np.asarray(theta, dtype=float)
    if theta[0] != 0.0 or theta[-1] != 1.0:
        raise PathError("Sample parameters must include both edge vertices")
    edges = transfer_edges(mesh)
    if strategy == "p2":
        family = _build_p2(mesh, domain, edges, theta, fallback)
    else:
        family = _build_p1(mesh, domain, edges, theta)

    long_paths = 0
    for paths in family:
        h = _reference_size(mesh, paths.edge)
        lengths = paths.lengths
        worst = int(np.argmax(lengths)) if lengths.size else 0
        if lengths.size and lengths[worst] >= MAX_PATH * h:
            raise PathLengthError(paths.edge, float(lengths[worst]), h)
        long_paths += int(np.sum(lengths > LONG_PATH * h))
    if long_paths:
        logger.warning("%d transfer paths are longer than %.0f h_K", long_paths, LONG_PATH)
    if family.fallbacks:
        logger.warning("%d P2 samples fell back to the closest point", family.fallbacks)
    logger.debug("Built %s paths on %d edges", strategy, len(family))
    return family


# ---------------------------------------------------------------------------
# Charts


@dataclass(eq=False)
class EdgeChart:
    """Parameterization theta -> phi(theta) of the curve segment facing an edge."""

    edge: int
    curve: Curve
    strategy: str
    start: np.ndarray
    end: np.ndarray
    normal: np.ndarray
    reach: float
    vertex_displacements: Tuple[np.ndarray, np.ndarray]
    theta: np.ndarray
    points: np.ndarray
    fallback: bool = False

    @property
    def endpoints(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.points[0], self.points[-1]

    def evaluate(self, theta) -> np.ndarray:
        """Chart images at arbitrary parameters in [0, 1]."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        origins = self.start[None] + np.outer(theta, self.end - self.start)
        if self.strategy == "p1":
            d_a, d_b = self.vertex_displacements
            return origins + np.outer(1.0 - theta, d_a) + np.outer(theta, d_b)
        return np.array([normal_hit(self.curve, x, self.normal, self.reach, self.edge, float(th),
                                    self.fallback)[0]
                         for th, x in zip(theta, origins)])


def edge_chart(e: int, family: PathFamily, mesh: Mesh, fallback: bool = False) -> EdgeChart:
    """Chart of the curve segment facing edge e, checked for fold-back.

    Consecutive images must advance along the edge direction. Under P2 every
    image must also lie on the curve.
    """
    paths = family[e]
    a, b = mesh.edges[e]
    start, end = mesh.vertices[a], mesh.vertices[b]
    disp = paths.displacements
    chart = EdgeChart(
        edge=int(e),
        curve=paths.curve,
        strategy=family.strategy,
        start=start,
        end=end,
        normal=paths.normal,
        reach=_reference_size(mesh, e),
        vertex_displacements=(disp[0], disp[-1]),
        theta=paths.theta,
        points=paths.endpoints,
        fallback=fallback,
    )
    advance = np.diff(paths.endpoints @ (end - start))
    if np.any(advance <= 0):
        raise FoldBackError(int(e))
    if family.strategy == "p2":
        residual = float(np.max(np.abs(paths.curve.value(paths.endpoints))))
        if residual > ON_CURVE_CHART_TOL:
            raise PathError(f"Chart of edge {e} leaves the curve (|F| = {residual:.2e})")
    return chart


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass
class PathDiagnostics:
    paths: int = 0
    max_ratio: float = 0.0
    long_paths: int = 0
    crossings: int = 0
    crossing_pairs: List[Tuple[int, int]] = field(default_factory=list)
    wrong_region: int = 0
    element_crossings: int = 0
    mixed_interface_edges: int = 0

    def as_dict(self) -> dict:
        return {
            "paths": self.paths,
            "max_length_over_h": self.max_ratio,
            "long_paths": self.long_paths,
            "crossings": self.crossings,
            "wrong_region": self.wrong_region,
            "element_crossings": self.element_crossings,
            "mixed_interface_edges": self.mixed_interface_edges,
        }


def validate_paths(family: PathFamily, mesh: Mesh, domain: Optional[DomainSpec] = None) -> PathDiagnostics:
    """Report path pathologies without modifying anything.

    Counts paths longer than 2 h_K, proper crossings between paths of
    different origins, paths that cross their curve before the endpoint,
    paths leaving their element through another of its edges, and interface
    edges straddling the true interface (only when ``domain`` is given).
    """
    report = PathDiagnostics()
    starts, ends, owners = [], [], []
    fractions = np.linspace(0.05, 0.95, 10)
    for paths in family:
        h = _reference_size(mesh, paths.edge)
        lengths = paths.lengths
        report.paths += lengths.size
        if lengths.size:
            report.max_ratio = max(report.max_ratio, float(lengths.max() / h))
        report.long_paths += int(np.sum(lengths > LONG_PATH * h))
        elements = [t for t in mesh.edge_elements[paths.edge] if t >= 0]
        for i in range(len(paths)):
            x, xb = paths.origins[i], paths.endpoints[i]
            starts.append(x)
            ends.append(xb)
            owners.append(paths.edge)
            if lengths[i] <= ZERO_LENGTH:
                continue
            along = x[None] + np.outer(fractions, xb - x)
            vals = paths.curve.value(along)
            if np.any(np.sign(vals) != np.sign(vals[0])):
                report.wrong_region += 1
            crossed = False
            for t in elements:
                for j in range(3):
                    edge = mesh.element_edges[t, j]
                    if edge == paths.edge:
                        continue
                    p, q = mesh.vertices[mesh.edges[edge]]
                    crossed = crossed or _segments_cross(x, xb, p, q)
            report.element_crossings += int(crossed)
        if domain is not None and domain.interface is not None and mesh.edge_class[paths.edge] == EDGE_INTERFACE:
            vals = domain.interface.value(mesh.edge_points(paths.edge, paths.theta[paths.interior()]))
            if np.any(vals > 0) and np.any(vals < 0):
                report.mixed_interface_edges += 1

    if starts:
        starts_arr = np.array(starts)
        ends_arr = np.array(ends)
        mids = 0.5 * (starts_arr + ends_arr)
        radius = float(np.max(np.linalg.norm(ends_arr - starts_arr, axis=1)))
        if radius > 0:
            tree = cKDTree(mids)
            for i, j in sorted(tree.query_pairs(radius)):
                shared = min(np.linalg.norm(starts_arr[i] - starts_arr[j]),
                             np.linalg.norm(ends_arr[i] - ends_arr[j])) <= 1e-12
                if shared:
                    continue
                if _segments_cross(starts_arr[i], ends_arr[i], starts_arr[j], ends_arr[j]):
                    report.crossings += 1
                    report.crossing_pairs.append((owners[i], owners[j]))

    if report.mixed_interface_edges:
        logger.warning("%d interface edges straddle the true interface", report.mixed_interface_edges)
    logger.info("Path diagnostics: %s", report.as_dict())
    return report
