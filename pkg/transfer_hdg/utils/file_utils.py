"""
File utility functions for the transfer-path HDG solver.
"""
import csv
import logging
import os
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("k", "h", "e_u", "ord_u", "e_q", "ord_q",
                  "e_uhat", "ord_uhat", "e_ustar", "ord_ustar")
PATH_COLUMNS = ("edge_id", "theta", "x", "y", "xbar", "ybar", "length")


def check_file_writeable(filepath: str) -> Tuple[bool, str]:
    """
    Check if a file can be written to.

    Args:
        filepath: Path to the file

    Returns:
        Tuple of (is_writeable, error_message)
    """
    # If file doesn't exist, check if directory is writeable
    if not os.path.exists(filepath):
        directory = os.path.dirname(filepath) or "."
        if not os.path.exists(directory):
            return False, f"Directory {directory} does not exist"
        if not os.access(directory, os.W_OK):
            return False, f"Directory {directory} is not writeable"
        return True, ""

    if not os.access(filepath, os.W_OK):
        return False, f"File {filepath} is not writeable (permission denied)"
    return True, ""


def ensure_extension(filename: str, extension: str) -> str:
    """
    Ensure filename ends with the given extension.

    Args:
        filename: The filename to check
        extension: Extension including the dot, e.g. '.vtk'

    Returns:
        Filename with the extension
    """
    if not filename.endswith(extension):
        return filename + extension
    return filename


def ensure_directory(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def format_number(value: Optional[float]) -> str:
    """Scientific notation for errors; blank for undefined values."""
    if value is None or not np.isfinite(value):
        return ""
    return f"{value:.6e}"


def format_order(value: Optional[float]) -> str:
    if value is None or not np.isfinite(value):
        return ""
    return f"{value:.4f}"


def write_report_csv(filepath: str, rows: Sequence[Mapping[str, Optional[float]]]) -> str:
    """
    Write convergence rows with the report schema.

    Args:
        filepath: Destination CSV path
        rows: One mapping per (k, level) with the REPORT_COLUMNS keys

    Returns:
        The path written
    """
    filepath = ensure_extension(filepath, ".csv")
    with open(filepath, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            out = []
            for column in REPORT_COLUMNS:
                value = row.get(column)
                if column == "k":
                    out.append(str(int(value)))
                elif column.startswith("ord_"):
                    out.append(format_order(value))
                else:
                    out.append(format_number(value))
            writer.writerow(out)
    logger.info("Wrote %d report rows to %s", len(rows), filepath)
    return filepath


def read_report_csv(filepath: str) -> List[Dict[str, Optional[float]]]:
    """Read a report CSV back; blank cells become None."""
    rows = []
    with open(filepath, newline="", encoding="utf-8") as handle:
        for record in csv.DictReader(handle):
            rows.append({key: (float(val) if val != "" else None) for key, val in record.items()})
    return rows


def write_paths_csv(filepath: str, records: Iterable[Sequence[float]]) -> str:
    """Dump transfer paths as edge_id,theta,x,y,xbar,ybar,length."""
    filepath = ensure_extension(filepath, ".csv")
    count = 0
    with open(filepath, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(PATH_COLUMNS)
        for edge_id, theta, x, y, xbar, ybar, length in records:
            writer.writerow([int(edge_id), repr(float(theta)), repr(float(x)), repr(float(y)),
                             repr(float(xbar)), repr(float(ybar)), repr(float(length))])
            count += 1
    logger.info("Wrote %d transfer paths to %s", count, filepath)
    return filepath


def write_vtk(filepath: str, points: np.ndarray, cells: np.ndarray,
              point_data: Mapping[str, np.ndarray], title: str = "transfer_hdg fields") -> str:
    """
    Write a legacy ASCII VTK unstructured grid of triangles.

    Args:
        filepath: Destination path
        points: (npoints, 2) coordinates
        cells: (ncells, 3) point indices
        point_data: name -> (npoints,) scalars or (npoints, 2) vectors
        title: Header comment line

    Returns:
        The path written
    """
    filepath = ensure_extension(filepath, ".vtk")
    npts = points.shape[0]
    ncells = cells.shape[0]
    with open(filepath, "w", encoding="utf-8") as f:
        f.write("# vtk DataFile Version 2.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {npts} double\n")
        for x, y in points:
            f.write(f"{float(x)!r} {float(y)!r} 0.0\n")
        f.write(f"CELLS {ncells} {4 * ncells}\n")
        for a, b, c in cells:
            f.write(f"3 {a} {b} {c}\n")
        f.write(f"CELL_TYPES {ncells}\n")
        for _ in range(ncells):
            f.write("5\n")
        if point_data:
            f.write(f"POINT_DATA {npts}\n")
            for name, values in point_data.items():
                values = np.asarray(values, dtype=float)
                if values.ndim == 1:
                    f.write(f"SCALARS {name} double 1\n")
                    f.write("LOOKUP_TABLE default\n")
                    for v in values:
                        f.write(f"{float(v)!r}\n")
                else:
                    f.write(f"VECTORS {name} double\n")
                    for vx, vy in values:
                        f.write(f"{float(vx)!r} {float(vy)!r} 0.0\n")
    logger.info("Wrote VTK file %s (%d cells)", filepath, ncells)
    return filepath


def read_vtk_point_data(filepath: str) -> Dict[str, np.ndarray]:
    """Minimal reader for files produced by write_vtk (used to check dumps)."""
    with open(filepath, encoding="utf-8") as f:
        tokens = f.read().split("\n")
    if not tokens[0].startswith("# vtk DataFile"):
        raise ValueError(f"{filepath} is not a legacy VTK file")
    data: Dict[str, np.ndarray] = {}
    i = 0
    npts = 0
    while i < len(tokens):
        line = tokens[i].split()
        if line and line[0] == "POINT_DATA":
            npts = int(line[1])
        elif line and line[0] == "SCALARS":
            values = [float(tokens[i + 2 + j]) for j in range(npts)]
            data[line[1]] = np.array(values)
            i += 1 + npts
        elif line and line[0] == "VECTORS":
            values = [[float(v) for v in tokens[i + 1 + j].split()[:2]] for j in range(npts)]
            data[line[1]] = np.array(values)
            i += npts
        i += 1
    return data
