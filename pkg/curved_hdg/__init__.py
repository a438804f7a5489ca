from transfer_hdg.main import run_cli

__all__ = ["run_cli"]
