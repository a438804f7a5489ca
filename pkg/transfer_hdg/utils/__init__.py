"""
Utility functions for the transfer HDG solver.

This package contains file output helpers (CSV, VTK, mesh paths), the run
configuration layer and the Word report writer.
"""

from transfer_hdg.utils.file_utils import check_file_writeable, ensure_extension, write_report_csv, write_vtk
