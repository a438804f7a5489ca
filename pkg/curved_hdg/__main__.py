"""
Entry point for running the solver as a Python module.
This allows running: python -m curved_hdg convergence --case ex1
"""
import sys

from transfer_hdg.main import run_cli

if __name__ == "__main__":
    sys.exit(run_cli())
