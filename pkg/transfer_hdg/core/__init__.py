"""
Core functionality for the transfer HDG solver.

This package contains geometry, meshing, transfer paths, the HDG discretization,
postprocessing and the manufactured-solution analysis.
"""

from transfer_hdg.core.errors import HdgError, ConfigError
from transfer_hdg.core.geometry import BoundaryPiece, DomainSpec
from transfer_hdg.core.mesh import Mesh, read_mesh, write_mesh
from transfer_hdg.core.paths import PathFamily, build_paths, validate_paths
from transfer_hdg.core.hdg import assemble, solve, solve_condensed
from transfer_hdg.core.postprocess import postprocess
