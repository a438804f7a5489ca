"""
Refinement sweeps producing the convergence report.
"""
import logging
import os
from typing import Any, Dict

from transfer_hdg.core.analysis import ErrorReport, case
from transfer_hdg.core.errors import HdgError
from transfer_hdg.tools.solve_tools import solve_level
from transfer_hdg.utils.config_utils import RunConfig
from transfer_hdg.utils.file_utils import ensure_directory, write_paths_csv, write_report_csv
from transfer_hdg.utils.report_utils import write_report_docx

logger = logging.getLogger(__name__)


def run_convergence(config: RunConfig) -> Dict[str, Any]:
    """
    Solve every configured level and write report.csv (and report.docx on request).

    Args:
        config: Validated run configuration

    Returns:
        Result dictionary with success flag, the report rows and output paths
    """
    out = ensure_directory(config.out)
    if config.mesh_file:
        logger.warning("Ignoring mesh_file %s: convergence runs generate their meshes", config.mesh_file)
    report = ErrorReport(config.case)
    level = None
    try:
        mc = case(config.case, config.ex5_frame)
        logger.info("Convergence study %s: %s, k=%d, paths=%s, fit=%s, levels=%s",
                    mc.label, mc.description, config.k, config.paths, config.fit, list(config.levels))
        for level in config.levels:
            result = solve_level(mc, mc.mesh(level, config.fit), config)
            write_paths_csv(os.path.join(out, f"paths_level{level}.csv"), result.family.records())
            report.add(config.k, result.h, result.norms, level=level,
                       **{f"full_{key}": value for key, value in result.full_norms.items()})
            logger.info("Level %d: h=%.4g %s", level, result.h,
                        " ".join(f"{key}={value:.3e}" for key, value in result.norms.items()))
    except HdgError as exc:
        logger.error("Level %s failed: %s", level, exc)
        return {"success": False, "error": str(exc), "level": level, "rows": report.table()}

    rows = report.table()
    csv_path = write_report_csv(os.path.join(out, "report.csv"), rows)
    result = {
        "success": True,
        "message": f"Solved {len(rows)} levels of {config.case} with k={config.k}",
        "report": csv_path,
        "rows": rows,
    }
    if config.docx:
        result["docx"] = write_report_docx(
            os.path.join(out, "report.docx"), f"{mc.label}: {mc.description}", rows,
            notes=[f"Transfer paths {config.paths}, {config.fit} computational domain."])
    return result
