"""
Manufactured-solution catalog, error norms and estimated orders of convergence.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from transfer_hdg.core.basis import edge_basis
from transfer_hdg.core.errors import HdgError, UnknownCaseError
from transfer_hdg.core.geometry import (
    DIRICHLET,
    NEUMANN,
    BoundaryPiece,
    Circle,
    DomainSpec,
    Ellipse,
    JoukowskyAirfoil,
    Kidney,
    PolygonCurve,
    joukowsky_airfoil,
)
from transfer_hdg.core.hdg import FieldSolution
from transfer_hdg.core.mesh import (
    EDGE_INTERFACE,
    Mesh,
    classify_edges,
    generate_annulus,
    generate_immersed,
    generate_interpolated,
)
from transfer_hdg.core.postprocess import PostprocessedField
from transfer_hdg.core.quadrature import gauss_interval, map_to_triangle, triangle_rule

logger = logging.getLogger(__name__)

FITS = ("immersed", "interpolated")
EX5_FRAMES = ("preimage", "airfoil")
AIRFOIL_R = 0.1605
AIRFOIL_S = (0.01, 0.01)


# ---------------------------------------------------------------------------
# Exact branches


@dataclass(frozen=True, eq=False)
class Branch:
    """Smooth exact solution of one region: value, gradient and Hessian."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]


def _xy(points):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return pts[:, 0], pts[:, 1]


def _hess(hxx, hxy, hyy) -> np.ndarray:
    return np.stack([np.stack([hxx, hxy], axis=-1), np.stack([hxy, hyy], axis=-1)], axis=-2)


def sin_sin() -> Branch:
    """u = sin x sin y."""
    def value(p):
        x, y = _xy(p)
        return np.sin(x) * np.sin(y)

    def gradient(p):
        x, y = _xy(p)
        return np.column_stack([np.cos(x) * np.sin(y), np.sin(x) * np.cos(y)])

    def hessian(p):
        x, y = _xy(p)
        ss = np.sin(x) * np.sin(y)
        cc = np.cos(x) * np.cos(y)
        return _hess(-ss, cc, -ss)

    return Branch("sin(x)sin(y)", value, gradient, hessian)


def exp_cos() -> Branch:
    """u = e^x cos y."""
    def value(p):
        x, y = _xy(p)
        return np.exp(x) * np.cos(y)

    def gradient(p):
        x, y = _xy(p)
        return np.column_stack([np.exp(x) * np.cos(y), -np.exp(x) * np.sin(y)])

    def hessian(p):
        x, y = _xy(p)
        ec, es = np.exp(x) * np.cos(y), np.exp(x) * np.sin(y)
        return _hess(ec, -es, -ec)

    return Branch("exp(x)cos(y)", value, gradient, hessian)


def sin_pi() -> Branch:
    """u = sin(pi x) sin(pi y)."""
    def value(p):
        x, y = _xy(p)
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def gradient(p):
        x, y = _xy(p)
        return np.pi * np.column_stack([np.cos(np.pi * x) * np.sin(np.pi * y),
                                        np.sin(np.pi * x) * np.cos(np.pi * y)])

    def hessian(p):
        x, y = _xy(p)
        ss = np.sin(np.pi * x) * np.sin(np.pi * y)
        cc = np.cos(np.pi * x) * np.cos(np.pi * y)
        return np.pi ** 2 * _hess(-ss, cc, -ss)

    return Branch("sin(pi x)sin(pi y)", value, gradient, hessian)


def radial_power(kappa: float, shift: float = 0.0) -> Branch:
    """u = r^5 / kappa + shift."""
    def value(p):
        x, y = _xy(p)
        return np.hypot(x, y) ** 5 / kappa + shift

    def gradient(p):
        x, y = _xy(p)
        r3 = np.hypot(x, y) ** 3
        return 5.0 / kappa * np.column_stack([r3 * x, r3 * y])

    def hessian(p):
        x, y = _xy(p)
        r = np.hypot(x, y)
        c = 5.0 / kappa
        return c * _hess(r ** 3 + 3 * r * x * x, 3 * r * x * y, r ** 3 + 3 * r * y * y)

    return Branch(f"r^5/{kappa:g}", value, gradient, hessian)


def potential_flow(airfoil: JoukowskyAirfoil, frame: str = "preimage") -> Branch:
    """Flow past the airfoil, u = Re W with W analytic.

    ``preimage``: W = zeta + R^2 / zeta, zeta = J^-1(w) - s (the cylinder flow
    carried to the airfoil plane, zero normal flux on the airfoil).
    ``airfoil``: W = w + R^2 / w, the polar formula read in the airfoil plane.
    """
    if frame not in EX5_FRAMES:
        raise HdgError(f"Unknown ex5 frame '{frame}', expected one of {EX5_FRAMES}")
    R2 = airfoil.R ** 2
    lam2 = airfoil.lam ** 2

    def parts(p):
        x, y = _xy(p)
        w = x + 1j * y
        if frame == "airfoil":
            return w + R2 / w, 1.0 - R2 / w ** 2, 2.0 * R2 / w ** 3
        z = airfoil.preimage(w)
        zeta = z - airfoil.shift
        j1 = 1.0 - lam2 / z ** 2
        j2 = 2.0 * lam2 / z ** 3
        dW = 1.0 - R2 / zeta ** 2
        return zeta + R2 / zeta, dW / j1, (2.0 * R2 / zeta ** 3) / j1 ** 2 - dW * j2 / j1 ** 3

    def value(p):
        return np.real(parts(p)[0])

    def gradient(p):
        w1 = parts(p)[1]
        return np.column_stack([np.real(w1), -np.imag(w1)])

    def hessian(p):
        w2 = parts(p)[2]
        return _hess(np.real(w2), -np.imag(w2), -np.real(w2))

    return Branch(f"potential flow ({frame})", value, gradient, hessian)


# ---------------------------------------------------------------------------
# Cases


@dataclass(frozen=True)
class MeshRecipe:
    """How a case turns a level parameter into a computational mesh.

    Levels count background cells across the bounding box (immersed), nodes
    per unit weight on each curve (interpolated), or radial cells (annulus).
    """

    annulus: Optional[Tuple[Tuple[float, float], float, float]] = None
    theta_per_radial: int = 12
    inset_fraction: float = 0.0
    node_weights: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    label: str
    description: str
    domain: DomainSpec
    branches: Tuple[Branch, ...]
    strategy: str = "p2"
    fit: str = "interpolated"
    levels: Tuple[int, ...] = (4, 8, 16, 32)
    recipe: MeshRecipe = field(default_factory=MeshRecipe)

    @property
    def has_interface(self) -> bool:
        return self.domain.interface is not None

    def branch(self, region: int) -> Branch:
        return self.branches[min(region, len(self.branches)) - 1]

    # -- exact fields --------------------------------------------------------
    def u(self, points, region: int = 1) -> np.ndarray:
        return self.branch(region).value(points)

    def q(self, points, region: int = 1) -> np.ndarray:
        return -self.branch(region).gradient(points) @ self.domain.tensor(region).T

    def source(self, points, region: int = 1) -> np.ndarray:
        """f = div(K grad u), so that -div q = f."""
        H = self.branch(region).hessian(points)
        return np.einsum("ij,pij->p", self.domain.tensor(region), H)

    # -- boundary and interface data -----------------------------------------
    def dirichlet(self, points, region: int = 1) -> np.ndarray:
        return self.u(points, region)

    def neumann(self, points, normals, region: int = 1) -> np.ndarray:
        return np.einsum("pc,pc->p", self.q(points, region), np.asarray(normals, dtype=float))

    def jump_value(self, points) -> np.ndarray:
        return self.u(points, 1) - self.u(points, 2)

    def jump_flux(self, points, normals) -> np.ndarray:
        dq = self.q(points, 1) - self.q(points, 2)
        return np.einsum("pc,pc->p", dq, np.asarray(normals, dtype=float))

    # -- meshes ---------------------------------------------------------------
    def mesh(self, level: int, fit: Optional[str] = None) -> Mesh:
        """Classified computational mesh of a refinement level."""
        fit = fit or self.fit
        if fit not in FITS:
            raise HdgError(f"Unknown fit '{fit}', expected one of {FITS}")
        recipe = self.recipe
        if recipe.annulus is not None:
            center, r_in, r_out = recipe.annulus
            inset = recipe.inset_fraction * (r_out - r_in) / level if fit == "immersed" else 0.0
            mesh = generate_annulus(center, r_in, r_out, recipe.theta_per_radial * level, level, inset)
        elif fit == "immersed":
            x0, x1, _, _ = self.domain.bounding_box()
            mesh = generate_immersed(self.domain, (x1 - x0) / level)
        else:
            nodes = [w * level for w in recipe.node_weights] if recipe.node_weights else level
            mesh = generate_interpolated(self.domain, nodes)
        return classify_edges(mesh, self.domain)


def _box(x0: float, x1: float, y0: float, y1: float) -> PolygonCurve:
    return PolygonCurve(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def _left_side_neumann(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    return (np.abs(x) < 1e-9) & (y > 1e-9) & (y < 1.0 - 1e-9)


def _ring(center, r_in, r_out, inner, outer) -> Tuple[BoundaryPiece, ...]:
    return (BoundaryPiece(Circle(center, r_in), domain_inside=False, condition=inner),
            BoundaryPiece(Circle(center, r_out), domain_inside=True, condition=outer))


def _airfoil_domain(name: str) -> DomainSpec:
    foil = joukowsky_airfoil(AIRFOIL_R, *AIRFOIL_S)
    return DomainSpec(name, (BoundaryPiece(_box(-1, 1, -1, 1), True, DIRICHLET),
                             BoundaryPiece(foil, domain_inside=False, condition=NEUMANN)))


def _interface_box(name: str, interface, conductivity=None) -> DomainSpec:
    boundary = (BoundaryPiece(_box(-1, 1, -1, 1), True, DIRICHLET),)
    if conductivity is None:
        return DomainSpec(name, boundary, interface)
    return DomainSpec(name, boundary, interface, conductivity)


def _catalog(ex5_frame: str) -> Dict[str, Callable[[], ManufacturedCase]]:
    center = (0.5, 0.5)
    kappa1, kappa2, radius = 1.0, 100.0, 0.5
    return {
        "ex1": lambda: ManufacturedCase(
            "ex1", "unit square, neumann on x=0, sin(x)sin(y)",
            DomainSpec("square", (BoundaryPiece(_box(0, 1, 0, 1), True, _left_side_neumann),)),
            (sin_sin(),), strategy="p2", fit="immersed", levels=(4, 8, 16, 32),
            recipe=MeshRecipe(node_weights=(4,))),
        "ex2": lambda: ManufacturedCase(
            "ex2", "annulus 14<r<20, neumann outer, sin(x)sin(y)",
            DomainSpec("annulus-14-20", _ring((0.0, 0.0), 14.0, 20.0, DIRICHLET, NEUMANN)),
            (sin_sin(),), strategy="p2", fit="immersed", levels=(2, 4, 8, 16),
            recipe=MeshRecipe(annulus=((0.0, 0.0), 14.0, 20.0), theta_per_radial=16, inset_fraction=0.25)),
        "ex3": lambda: ManufacturedCase(
            "ex3", "ring 0.25<r'<1 about (0.5,0.5), neumann outer, sin(x)sin(y)",
            DomainSpec("ring-0.25-1", _ring(center, 0.25, 1.0, DIRICHLET, NEUMANN)),
            (sin_sin(),), strategy="p1", fit="immersed", levels=(8, 16, 32, 64)),
        "ex4": lambda: ManufacturedCase(
            "ex4", "annulus 1<r'<2 about (0.5,0.5), neumann inner, sin(x)sin(y)",
            DomainSpec("annulus-1-2", _ring(center, 1.0, 2.0, NEUMANN, DIRICHLET)),
            (sin_sin(),), strategy="p2", fit="interpolated", levels=(1, 2, 4, 8),
            recipe=MeshRecipe(annulus=(center, 1.0, 2.0), theta_per_radial=12, inset_fraction=0.25)),
        "ex5a": lambda: ManufacturedCase(
            "ex5a", "box minus airfoil, sin(x)sin(y)", _airfoil_domain("airfoil-box"),
            (sin_sin(),), strategy="p2", fit="interpolated", levels=(4, 8, 16),
            recipe=MeshRecipe(node_weights=(4, 4))),
        "ex5b": lambda: ManufacturedCase(
            "ex5b", f"box minus airfoil, potential flow ({ex5_frame} frame)", _airfoil_domain("airfoil-box"),
            (potential_flow(joukowsky_airfoil(AIRFOIL_R, *AIRFOIL_S), ex5_frame),),
            strategy="p2", fit="interpolated", levels=(4, 8, 16), recipe=MeshRecipe(node_weights=(4, 4))),
        "ex6": lambda: ManufacturedCase(
            "ex6", "square with elliptical interface", _interface_box("ellipse-interface", Ellipse(0.8, 0.4)),
            (exp_cos(), sin_pi()), strategy="p2", fit="interpolated", levels=(16, 32, 64, 128)),
        "ex7": lambda: ManufacturedCase(
            "ex7", "square with kidney interface", _interface_box("kidney-interface", Kidney()),
            (exp_cos(), sin_pi()), strategy="p2", fit="interpolated", levels=(16, 32, 64, 128)),
        "ex8": lambda: ManufacturedCase(
            "ex8", "thermal conductivity contrast 1:100 across a circle",
            _interface_box("circle-interface", Circle((0.0, 0.0), radius),
                           (((kappa1, 0.0), (0.0, kappa1)), ((kappa2, 0.0), (0.0, kappa2)))),
            (radial_power(kappa1), radial_power(kappa2, (1.0 / kappa1 - 1.0 / kappa2) * radius ** 5)),
            strategy="p2", fit="interpolated", levels=(16, 32, 64, 128)),
    }


CASE_LABELS = ("ex1", "ex2", "ex3", "ex4", "ex5a", "ex5b", "ex6", "ex7", "ex8")


def case(label: str, ex5_frame: str = "preimage") -> ManufacturedCase:
    """Catalog entry by label."""
    if ex5_frame not in EX5_FRAMES:
        raise HdgError(f"Unknown ex5 frame '{ex5_frame}', expected one of {EX5_FRAMES}")
    builders = _catalog(ex5_frame)
    if label not in builders:
        raise UnknownCaseError(label, CASE_LABELS)
    return builders[label]()


def sample_region(mc: ManufacturedCase, region: int, count: int, seed: int = 0,
                  margin: float = 1e-3) -> np.ndarray:
    """Seeded uniform samples of a region, at least ``margin`` inside the domain."""
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = mc.domain.bounding_box()
    out = np.empty((0, 2))
    for _ in range(200):
        pts = np.column_stack([rng.uniform(x0, x1, 4 * count), rng.uniform(y0, y1, 4 * count)])
        keep = (mc.domain.value(pts) < -margin) & (mc.domain.region(pts) == region)
        out = np.vstack([out, pts[keep]])
        if out.shape[0] >= count:
            return out[:count]
    raise HdgError(f"Could not sample region {region} of {mc.label}")


def _central(fn, x: np.ndarray, axis: int, step: float) -> np.ndarray:
    e = np.zeros(2)
    e[axis] = step
    return (fn(x + e) - fn(x - e)) / (2.0 * step)


def _richardson(fn, x: np.ndarray, axis: int, step: float = 1e-3) -> np.ndarray:
    return (4.0 * _central(fn, x, axis, 0.5 * step) - _central(fn, x, axis, step)) / 3.0


def check_self_consistency(mc: ManufacturedCase, count: int = 100, seed: int = 0) -> Dict[str, float]:
    """Largest relative mismatch of q = -K grad u and -div q = f against finite differences."""
    worst = {"flux": 0.0, "source": 0.0}
    regions = (1, 2) if mc.has_interface else (1,)
    for region in regions:
        pts = sample_region(mc, region, count, seed=seed + region)
        K = mc.domain.tensor(region)
        fd_grad = np.column_stack([_richardson(lambda p: mc.u(p, region), pts, c) for c in range(2)])
        q_fd = -fd_grad @ K.T
        q = mc.q(pts, region)
        scale = np.maximum(1.0, np.abs(q))
        worst["flux"] = max(worst["flux"], float(np.max(np.abs(q - q_fd) / scale)))
        div = sum(_richardson(lambda p, c=c: mc.q(p, region)[:, c], pts, c) for c in range(2))
        f = mc.source(pts, region)
        scale = np.maximum(1.0, np.abs(f))
        worst["source"] = max(worst["source"], float(np.max(np.abs(-div - f) / scale)))
    logger.debug("Self-consistency of %s: %s", mc.label, worst)
    return worst


# ---------------------------------------------------------------------------
# Error norms


@dataclass
class ElementErrors:
    """Squared element errors and the weights used to combine them."""

    u: np.ndarray
    q: np.ndarray
    ustar: np.ndarray
    trace: np.ndarray
    trace_weight: np.ndarray
    area: np.ndarray


def element_errors(solution: FieldSolution, post: PostprocessedField, mc: ManufacturedCase) -> ElementErrors:
    mesh = solution.mesh
    k = solution.k
    rule = triangle_rule(2 * k + 4)
    line = gauss_interval(k + 4)
    psi_line = edge_basis(k, line.points)
    nt = mesh.num_triangles
    eu, eq, es, et, tw, area = (np.zeros(nt) for _ in range(6))
    diam = mesh.diameters
    for t in range(nt):
        region = int(mesh.regions[t])
        pts, wts = map_to_triangle(mesh.vertices[mesh.triangles[t]], rule)
        u_ex = mc.u(pts, region)
        eu[t] = np.dot(wts, (u_ex - solution.u_at(t, pts)) ** 2)
        eq[t] = np.dot(wts, np.sum((mc.q(pts, region) - solution.q_at(t, pts)) ** 2, axis=1))
        es[t] = np.dot(wts, (u_ex - post.eval(t, pts)) ** 2)
        area[t] = wts.sum()
        blk = solution.system.blocks[t]
        for j, face in enumerate(blk.faces):
            direction = face.end - face.start
            coef = psi_line.T @ (line.weights * mc.u(face.start[None] + np.outer(line.points, direction), region))
            projected = face.psi @ coef
            et[t] += diam[t] * np.dot(face.weights, (projected - solution.face_trace(t, j)) ** 2)
            tw[t] += diam[t] * face.length
    return ElementErrors(eu, eq, es, et, tw, area)


def error_norms(solution: FieldSolution, post: PostprocessedField, mc: ManufacturedCase,
                mesh: Optional[Mesh] = None) -> Dict[str, float]:
    """Norms normalized by the size of the computational domain."""
    errs = element_errors(solution, post, mc)
    size = errs.area.sum()
    return {
        "e_u": float(np.sqrt(errs.u.sum() / size)),
        "e_q": float(np.sqrt(errs.q.sum() / size)),
        "e_uhat": float(np.sqrt(errs.trace.sum() / errs.trace_weight.sum())),
        "e_ustar": float(np.sqrt(errs.ustar.sum() / size)),
    }


def away_from_interface(mesh: Mesh) -> np.ndarray:
    """Mask of triangles none of whose sides is an interface edge."""
    return ~np.any(mesh.edge_class[mesh.element_edges] == EDGE_INTERFACE, axis=1)


def interface_error_norms(solution: FieldSolution, post: PostprocessedField, mc: ManufacturedCase,
                          mesh: Optional[Mesh] = None) -> Dict[str, float]:
    """Unnormalized norms over the triangles without interface sides."""
    errs = element_errors(solution, post, mc)
    keep = away_from_interface(solution.mesh)
    return {
        "e_u": float(np.sqrt(errs.u[keep].sum())),
        "e_q": float(np.sqrt(errs.q[keep].sum())),
        "e_uhat": float(np.sqrt(errs.trace[keep].sum())),
        "e_ustar": float(np.sqrt(errs.ustar[keep].sum())),
    }


# ---------------------------------------------------------------------------
# Orders


ERROR_KEYS = ("e_u", "e_q", "e_uhat", "e_ustar")
ORDER_KEYS = {"e_u": "ord_u", "e_q": "ord_q", "e_uhat": "ord_uhat", "e_ustar": "ord_ustar"}


def eoc(h: Sequence[float], errors: Sequence[float]) -> List[Optional[float]]:
    """Orders between consecutive levels; None for the first row and zero errors."""
    if len(h) != len(errors):
        raise HdgError("Mesh sizes and errors differ in length")
    orders: List[Optional[float]] = [None]
    for i in range(len(h) - 1):
        e0, e1 = errors[i], errors[i + 1]
        if e0 is None or e1 is None or e0 <= 0 or e1 <= 0:
            orders.append(None)
            continue
        if h[i] == h[i + 1]:
            raise HdgError(f"Levels {i} and {i + 1} have the same mesh size")
        orders.append(float(np.log(e0 / e1) / np.log(h[i] / h[i + 1])))
    return orders


@dataclass
class ErrorReport:
    """Convergence rows of one case; one block of levels per degree k."""

    label: str
    rows: List[Dict[str, float]] = field(default_factory=list)

    def add(self, k: int, h: float, norms: Dict[str, float], **extra) -> None:
        row = {"k": k, "h": h, **{key: norms[key] for key in ERROR_KEYS}}
        row.update(extra)
        self.rows.append(row)

    def degrees(self) -> List[int]:
        return sorted({int(r["k"]) for r in self.rows})

    def table(self) -> List[Dict[str, Optional[float]]]:
        """Rows with orders, computed within each degree."""
        out = []
        for k in self.degrees():
            block = [r for r in self.rows if int(r["k"]) == k]
            hs = [r["h"] for r in block]
            orders = {key: eoc(hs, [r[key] for r in block]) for key in ERROR_KEYS}
            for i, r in enumerate(block):
                row = dict(r)
                for key in ERROR_KEYS:
                    row[ORDER_KEYS[key]] = orders[key][i]
                out.append(row)
        return out
