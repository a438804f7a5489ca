"""
Single-level solves: mesh, paths, assembly, solve, postprocessing and field dumps.
"""
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from transfer_hdg.core.analysis import ManufacturedCase, case, error_norms, interface_error_norms
from transfer_hdg.core.errors import HdgError
from transfer_hdg.core.hdg import (
    FieldSolution,
    HdgSystem,
    assemble,
    conservation_summary,
    local_conservation,
    solve,
    solve_condensed,
)
from transfer_hdg.core.mesh import Mesh, read_mesh
from transfer_hdg.core.paths import PathDiagnostics, PathFamily, build_paths, validate_paths
from transfer_hdg.core.postprocess import PostprocessedField, postprocess
from transfer_hdg.utils.config_utils import RunConfig
from transfer_hdg.utils.file_utils import ensure_directory, write_paths_csv, write_vtk

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class LevelResult:
    mesh: Mesh
    family: PathFamily
    diagnostics: PathDiagnostics
    system: HdgSystem
    solution: FieldSolution
    post: PostprocessedField
    norms: Dict[str, float]
    full_norms: Dict[str, float]
    conservation: Dict[str, float]

    @property
    def h(self) -> float:
        return self.mesh.h


def solve_level(mc: ManufacturedCase, mesh: Mesh, config: RunConfig) -> LevelResult:
    """Run the whole pipeline on one mesh."""
    logger.info("Level mesh: %s", mesh.summary())
    family = build_paths(mesh, mc.domain, config.paths, k=config.k, fallback=config.fallback)
    diagnostics = validate_paths(family, mesh, mc.domain)
    system = assemble(mesh, mc.domain, family, config.k, mc, tau_scale=config.tau_scale)
    solver = solve_condensed if config.condensed else solve
    solution = solver(system, tol=config.tol)
    post = postprocess(solution)
    conservation = conservation_summary(local_conservation(solution), mesh)
    logger.info("Local conservation: standard elements %.3e, neumann/interface elements %.3e",
                conservation["standard_max"], conservation["modified_max"])
    full_norms = error_norms(solution, post, mc, mesh)
    if mc.has_interface:
        norms = interface_error_norms(solution, post, mc, mesh)
        logger.info("Errors over the full computational domain: %s", full_norms)
    else:
        norms = full_norms
    return LevelResult(mesh, family, diagnostics, system, solution, post, norms, full_norms, conservation)


def write_fields_vtk(filepath: str, solution: FieldSolution, post: PostprocessedField) -> str:
    """Discontinuous dump: every triangle carries its own three nodes."""
    mesh = solution.mesh
    nt = mesh.num_triangles
    points = mesh.vertices[mesh.triangles].reshape(-1, 2)
    cells = np.arange(3 * nt).reshape(nt, 3)
    u = np.empty(3 * nt)
    ustar = np.empty(3 * nt)
    q = np.empty((3 * nt, 2))
    for t in range(nt):
        corners = mesh.vertices[mesh.triangles[t]]
        u[3 * t: 3 * t + 3] = solution.u_at(t, corners)
        ustar[3 * t: 3 * t + 3] = post.eval(t, corners)
        q[3 * t: 3 * t + 3] = solution.q_at(t, corners)
    return write_vtk(filepath, points, cells, {"u_h": u, "u_star": ustar, "q_h": q},
                     title=f"transfer_hdg fields k={solution.k}")


def solve_case(config: RunConfig, level: Optional[int] = None) -> Dict[str, Any]:
    """
    Solve one level of a case and dump fields and paths.

    Args:
        config: Validated run configuration
        level: Refinement parameter; defaults to the last configured level

    Returns:
        Result dictionary with success flag, message and output paths
    """
    level = config.levels[-1] if level is None else level
    try:
        mc = case(config.case, config.ex5_frame)
        if config.mesh_file:
            if not os.path.exists(config.mesh_file):
                return {"success": False, "error": f"Mesh file {config.mesh_file} does not exist"}
            mesh = read_mesh(config.mesh_file)
        else:
            mesh = mc.mesh(level, config.fit)
        result = solve_level(mc, mesh, config)
        out = ensure_directory(config.out)
        vtk_path = write_fields_vtk(os.path.join(out, f"{config.case}_k{config.k}.vtk"),
                                    result.solution, result.post)
        paths_path = write_paths_csv(os.path.join(out, "paths.csv"), result.family.records())
    except HdgError as exc:
        logger.error("Solve failed: %s", exc)
        return {"success": False, "error": str(exc)}
    except OSError as exc:
        logger.error("Cannot write outputs: %s", exc)
        return {"success": False, "error": f"Cannot write outputs: {exc}"}
    return {
        "success": True,
        "message": f"Solved {config.case} (k={config.k}, h={result.h:.4g}), residual {result.solution.residual:.2e}",
        "vtk": vtk_path,
        "paths": paths_path,
        "norms": result.norms,
        "diagnostics": result.diagnostics.as_dict(),
    }
