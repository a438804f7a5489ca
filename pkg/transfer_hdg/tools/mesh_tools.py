"""
Mesh generation command.
"""
import logging
from typing import Any, Dict, Optional

from transfer_hdg.core.analysis import case
from transfer_hdg.core.errors import HdgError
from transfer_hdg.core.mesh import classify_edges, generate_interpolated, generate_square_grid, write_mesh
from transfer_hdg.utils.file_utils import ensure_extension

logger = logging.getLogger(__name__)

# geometry name -> catalog case providing the domain
GEOMETRIES = {
    "square": "ex1",
    "wide-annulus": "ex2",
    "ring": "ex3",
    "annulus": "ex4",
    "airfoil": "ex5a",
    "ellipse": "ex6",
    "kidney": "ex7",
    "circle": "ex8",
}


def build_mesh(geometry: str, out: str, fit: Optional[str] = None, n: Optional[int] = None,
               nodes: Optional[int] = None) -> Dict[str, Any]:
    """
    Generate, classify and write a mesh.

    Args:
        geometry: One of GEOMETRIES
        out: Destination mesh file
        fit: "immersed" or "interpolated" (geometry default when omitted)
        n: Refinement parameter (cells per side for the square)
        nodes: Node count on the longest curve for the interpolated fit

    Returns:
        Result dictionary with success flag, message and mesh summary
    """
    if geometry not in GEOMETRIES:
        return {"success": False, "usage": True, "error": f"Unknown geometry '{geometry}'"}
    try:
        mc = case(GEOMETRIES[geometry])
        if fit is None:
            fit = "interpolated" if geometry == "square" else mc.fit
        if geometry == "square" and fit == "interpolated" and nodes is None:
            mesh = classify_edges(generate_square_grid((0.0, 1.0, 0.0, 1.0), n or 4), mc.domain)
        elif nodes is not None:
            if fit != "interpolated":
                return {"success": False, "usage": True, "error": "--nodes applies to the interpolated fit only"}
            mesh = classify_edges(generate_interpolated(mc.domain, nodes), mc.domain)
        else:
            mesh = mc.mesh(n or mc.levels[0], fit)
        path = write_mesh(mesh, ensure_extension(out, ".mesh"))
    except HdgError as exc:
        logger.error("Mesh generation failed: %s", exc)
        return {"success": False, "error": str(exc)}
    summary = mesh.summary()
    logger.info("Mesh %s written to %s: %s", geometry, path, summary)
    return {"success": True, "message": f"Wrote {summary['triangles']} triangles to {path}",
            "path": path, "summary": summary}
