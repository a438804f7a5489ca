"""
Command implementations for the transfer HDG solver.

Each tool catches solver errors and returns a result dictionary with a
success flag, which the command line maps to an exit code.
"""

from transfer_hdg.tools.convergence_tools import run_convergence
from transfer_hdg.tools.mesh_tools import build_mesh
from transfer_hdg.tools.solve_tools import solve_case
