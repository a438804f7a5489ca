"""
Exception hierarchy for the transfer-path HDG solver.

Library code raises these; the tools layer turns them into result dictionaries.
"""
from typing import Optional, Sequence, Tuple


class HdgError(Exception):
    """Base class for every failure raised by the solver."""


# Geometry

class GeometryError(HdgError):
    pass


class DegenerateGradientError(GeometryError):
    """The curve gradient (or parametric tangent) vanishes at the query point."""


class ProjectionError(GeometryError):
    """Closest-point iteration did not converge."""


class NoIntersectionError(GeometryError):
    """No sign change of the implicit function along the searched ray."""

    def __init__(self, origin, direction, t_max: float):
        self.origin = tuple(float(c) for c in origin)
        self.direction = tuple(float(c) for c in direction)
        self.t_max = float(t_max)
        super().__init__(
            f"Ray from {self.origin} along {self.direction} does not meet the curve "
            f"for t in [0, {self.t_max:.6g}]"
        )


class ParameterDomainError(GeometryError):
    """Curve parameters outside their admissible range."""


# Mesh

class MeshError(HdgError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class InvariantViolationError(MeshError):
    """A mesh failed one of its structural invariants."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        super().__init__(f"{invariant}: {detail}" if detail else invariant)


class EmptyMeshError(MeshError):
    pass


class DisconnectedMeshError(MeshError):
    def __init__(self, components: int):
        self.components = components
        super().__init__(f"Mesh has {components} connected components")


class MixedEdgeError(MeshError):
    """A boundary edge's true-curve segment straddles the Dirichlet/Neumann split."""

    def __init__(self, edge: int, conditions: Sequence[str]):
        self.edge = edge
        self.conditions = tuple(conditions)
        super().__init__(
            f"Edge {edge} maps onto a curve segment with mixed conditions {self.conditions}; "
            "regenerate the mesh with a vertex at the split point"
        )


class MeshingError(MeshError):
    """The constrained triangulator could not mesh the polygon."""


# Paths

class PathError(HdgError):
    pass


class RayMissError(PathError):
    def __init__(self, edge: int, theta: float, searched: float):
        self.edge = edge
        self.theta = theta
        self.searched = searched
        super().__init__(
            f"Normal ray from edge {edge} at theta={theta:.6g} misses the curve "
            f"within distance {searched:.6g}"
        )


class CrossingError(PathError):
    def __init__(self, pairs: Sequence[Tuple[int, int]]):
        self.pairs = [tuple(p) for p in pairs]
        super().__init__(f"Unrepairable crossing vertex paths: {self.pairs}")


class FoldBackError(PathError):
    def __init__(self, edge: int):
        self.edge = edge
        super().__init__(f"Induced chart of edge {edge} folds back at quadrature resolution")


class PathLengthError(PathError):
    def __init__(self, edge: int, length: float, h: float):
        self.edge = edge
        self.length = length
        self.h = h
        super().__init__(
            f"Path on edge {edge} has length {length:.6g} >= 10 h_K (h_K={h:.6g})"
        )


# Discretization and solve

class AssemblyError(HdgError):
    pass


class SingularElementError(AssemblyError):
    def __init__(self, element: int, area: float):
        self.element = element
        self.area = area
        super().__init__(f"Element {element} is degenerate (area {area:.3e})")


class InterfaceSideError(AssemblyError):
    def __init__(self, edge: int, inside: float, outside: float):
        self.edge = edge
        self.inside = inside
        self.outside = outside
        super().__init__(
            f"Interface edge {edge} crosses the interface: points up to {inside:.3e} inside "
            f"and {outside:.3e} outside"
        )


class QuadratureError(AssemblyError):
    pass


class SingularSystemError(HdgError):
    def __init__(self, block: str, row: Optional[int] = None, residual: Optional[float] = None):
        self.block = block
        self.row = row
        self.residual = residual
        where = f" at row {row}" if row is not None else ""
        extra = f" (relative residual {residual:.3e})" if residual is not None else ""
        super().__init__(f"Singular system, zero pivot in block '{block}'{where}{extra}")


class UnknownCaseError(HdgError):
    def __init__(self, label: str, known: Sequence[str]):
        self.label = label
        super().__init__(f"Unknown case '{label}'. Known cases: {', '.join(known)}")


class ConfigError(HdgError):
    pass
