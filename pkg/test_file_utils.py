#!/usr/bin/env python3
"""
Tests for the CSV, VTK and Word outputs.
"""
import os
import sys

import numpy as np
import pytest
from docx import Document

from transfer_hdg.utils.file_utils import (
    PATH_COLUMNS,
    REPORT_COLUMNS,
    check_file_writeable,
    ensure_extension,
    read_report_csv,
    read_vtk_point_data,
    write_paths_csv,
    write_report_csv,
    write_vtk,
)
from transfer_hdg.utils.report_utils import write_report_docx

ROWS = [
    {"k": 1, "h": 0.25, "e_u": 1e-2, "ord_u": None, "e_q": 2e-2, "ord_q": None,
     "e_uhat": 3e-3, "ord_uhat": None, "e_ustar": 1e-3, "ord_ustar": None},
    {"k": 1, "h": 0.125, "e_u": 2.5e-3, "ord_u": 2.0, "e_q": 5e-3, "ord_q": 2.0,
     "e_uhat": 7.5e-4, "ord_uhat": 2.0, "e_ustar": 1.25e-4, "ord_ustar": 3.0},
    {"k": 2, "h": 0.25, "e_u": 1e-3, "ord_u": None, "e_q": 1e-3, "ord_q": None,
     "e_uhat": 1e-4, "ord_uhat": None, "e_ustar": 1e-5, "ord_ustar": None},
]


def test_report_csv_header_and_blank_orders(tmp_path):
    path = write_report_csv(str(tmp_path / "report"), ROWS)
    assert path.endswith(".csv")
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert lines[1].startswith("1,2.500000e-01,1.000000e-02,,")
    assert ",2.0000," in lines[2]
    back = read_report_csv(path)
    assert back[0]["ord_u"] is None
    assert back[1]["ord_ustar"] == pytest.approx(3.0)
    assert back[2]["k"] == 2.0


def test_paths_csv_rows(tmp_path):
    path = write_paths_csv(str(tmp_path / "paths.csv"), [(3, 0.5, 0.1, 0.2, 0.1, 0.0, 0.2)])
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    assert lines[0] == ",".join(PATH_COLUMNS)
    assert lines[1] == "3,0.5,0.1,0.2,0.1,0.0,0.2"


def test_vtk_point_data_round_trip(tmp_path):
    points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    cells = np.array([[0, 1, 2], [1, 3, 2]])
    scalars = np.array([0.5, -1.25, 2.0, 1e-7])
    vectors = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [-1.0, 3.0]])
    path = write_vtk(str(tmp_path / "fields"), points, cells, {"u_h": scalars, "q_h": vectors})
    assert path.endswith(".vtk")
    data = read_vtk_point_data(path)
    np.testing.assert_array_equal(data["u_h"], scalars)
    np.testing.assert_array_equal(data["q_h"], vectors)
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    assert "CELLS 2 8" in text
    assert "CELL_TYPES 2" in text


def test_check_file_writeable(tmp_path):
    ok, message = check_file_writeable(str(tmp_path / "missing" / "out.csv"))
    assert not ok
    assert "does not exist" in message
    ok, message = check_file_writeable(str(tmp_path / "out.csv"))
    assert ok and message == ""


def test_ensure_extension():
    assert ensure_extension("report", ".csv") == "report.csv"
    assert ensure_extension("report.csv", ".csv") == "report.csv"


def test_docx_report_has_one_table_per_degree(tmp_path):
    path = write_report_docx(str(tmp_path / "report"), "demo case", ROWS, notes=["note"])
    assert os.path.exists(path)
    doc = Document(path)
    assert len(doc.tables) == 2
    header = [cell.text for cell in doc.tables[0].rows[0].cells]
    assert header[:3] == ["h", "||e_u||", "order"]
    assert doc.tables[0].rows[2].cells[2].text == "2.0000"
    assert doc.tables[0].rows[1].cells[2].text == ""
    headings = [p.text for p in doc.paragraphs if p.style.name.startswith("Heading")]
    assert headings == ["demo case", "k = 1", "k = 2"]


def test_docx_report_rejects_missing_directory(tmp_path):
    with pytest.raises(OSError):
        write_report_docx(str(tmp_path / "nope" / "report.docx"), "demo", ROWS)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
