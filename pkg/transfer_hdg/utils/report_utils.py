"""
Word report of a convergence study: one table per polynomial degree with the
error and order of every variable.
"""
import logging
from typing import Dict, List, Optional, Sequence

from docx import Document
from docx.enum.style import WD_STYLE_TYPE
from docx.oxml import parse_xml
from docx.oxml.ns import nsdecls
from docx.oxml.shared import OxmlElement, qn
from docx.shared import Pt

from transfer_hdg.utils.file_utils import check_file_writeable, ensure_extension, format_number, format_order

logger = logging.getLogger(__name__)

HEADER_FILL = "D9E2F3"
TABLE_COLUMNS = (
    ("h", "h"),
    ("e_u", "||e_u||"), ("ord_u", "order"),
    ("e_q", "||e_q||"), ("ord_q", "order"),
    ("e_uhat", "||e_uhat||"), ("ord_uhat", "order"),
    ("e_ustar", "||e_u*||"), ("ord_ustar", "order"),
)


def set_cell_border(cell, **kwargs):
    """
    Set cell border properties.

    Args:
        cell: The cell to modify
        **kwargs: Border properties (top, bottom, left, right, val, sz, color)
    """
    tcPr = cell._tc.get_or_add_tcPr()
    for key in ("top", "left", "bottom", "right"):
        if not kwargs.get(key):
            continue
        element = OxmlElement(f"w:{key}")
        element.set(qn("w:val"), kwargs.get("val", "single"))
        element.set(qn("w:sz"), kwargs.get("sz", "4"))
        element.set(qn("w:space"), "0")
        element.set(qn("w:color"), kwargs.get("color", "auto"))
        borders = tcPr.first_child_found_in("w:tcBorders")
        if borders is None:
            borders = OxmlElement("w:tcBorders")
            tcPr.append(borders)
        borders.append(element)


def ensure_report_styles(doc) -> None:
    """Make sure the heading and caption styles used by the report exist."""
    for name, size in (("Heading 1", 16), ("Heading 2", 14), ("Caption", 9)):
        try:
            doc.styles[name]
        except KeyError:
            style = doc.styles.add_style(name, WD_STYLE_TYPE.PARAGRAPH)
            style.font.size = Pt(size)
            style.font.bold = name != "Caption"


def style_convergence_table(table) -> None:
    """Bold shaded header, single black borders on every cell."""
    for cell in table.rows[0].cells:
        for paragraph in cell.paragraphs:
            for run in paragraph.runs:
                run.bold = True
        cell._tc.get_or_add_tcPr().append(parse_xml(f'<w:shd {nsdecls("w")} w:fill="{HEADER_FILL}"/>'))
    for row in table.rows:
        for cell in row.cells:
            set_cell_border(cell, top=True, bottom=True, left=True, right=True, val="single", color="000000")


def _cell_text(key: str, value: Optional[float]) -> str:
    if key == "h":
        return f"{value:.4f}" if value is not None else ""
    if key.startswith("ord_"):
        return format_order(value)
    return format_number(value)


def write_report_docx(filepath: str, title: str, rows: Sequence[Dict[str, Optional[float]]],
                      notes: Optional[List[str]] = None) -> str:
    """
    Write the convergence tables to a .docx file.

    Args:
        filepath: Destination path
        title: Document heading (case description)
        rows: Report rows with orders (ErrorReport.table())
        notes: Optional paragraphs appended after the tables

    Returns:
        The path written
    """
    filepath = ensure_extension(filepath, ".docx")
    ok, message = check_file_writeable(filepath)
    if not ok:
        raise OSError(f"Cannot write report: {message}")
    doc = Document()
    ensure_report_styles(doc)
    doc.add_heading(title, level=1)
    for k in sorted({int(r["k"]) for r in rows}):
        block = [r for r in rows if int(r["k"]) == k]
        doc.add_heading(f"k = {k}", level=2)
        table = doc.add_table(rows=len(block) + 1, cols=len(TABLE_COLUMNS))
        for j, (_, header) in enumerate(TABLE_COLUMNS):
            table.cell(0, j).text = header
        for i, row in enumerate(block, start=1):
            for j, (key, _) in enumerate(TABLE_COLUMNS):
                table.cell(i, j).text = _cell_text(key, row.get(key))
        style_convergence_table(table)
    for note in notes or []:
        doc.add_paragraph(note)
    doc.save(filepath)
    logger.info("Wrote Word report %s", filepath)
    return filepath
