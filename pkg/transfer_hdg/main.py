"""
Main entry point for the transfer-path HDG solver.

Subcommands:
    convergence  solve a refinement sweep and write report.csv
    solve        solve one level and dump fields (VTK) and paths (CSV)
    mesh         generate a mesh file
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from transfer_hdg.core.analysis import CASE_LABELS, EX5_FRAMES, FITS
from transfer_hdg.core.errors import ConfigError
from transfer_hdg.core.paths import STRATEGIES
from transfer_hdg.tools.convergence_tools import run_convergence
from transfer_hdg.tools.mesh_tools import GEOMETRIES, build_mesh
from transfer_hdg.tools.solve_tools import solve_case
from transfer_hdg.utils.config_utils import RunConfig, load_run_config
from transfer_hdg.utils.file_utils import ensure_directory

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger("transfer_hdg")


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """
    Configure the package logger.

    Args:
        level: Level name; defaults to TRANSFER_HDG_LOG_LEVEL or INFO
        log_file: Optional file receiving a copy of every record
    """
    level = (level or os.getenv("TRANSFER_HDG_LOG_LEVEL", "INFO")).upper()
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    formatter = logging.Formatter(LOG_FORMAT)
    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(formatter)
    logger.addHandler(stream)
    if log_file:
        file_handler = logging.FileHandler(log_file, mode="w", encoding="utf-8")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    logger.setLevel(getattr(logging, level, logging.INFO))
    logger.propagate = False


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--case", choices=CASE_LABELS)
    parser.add_argument("--k", type=int, help="polynomial degree (0-3)")
    parser.add_argument("--levels", help="comma separated refinement parameters")
    parser.add_argument("--paths", choices=STRATEGIES)
    parser.add_argument("--fit", choices=FITS)
    parser.add_argument("--tol", type=float, help="relative residual tolerance of the solve")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--mesh-file", dest="mesh_file")
    parser.add_argument("--ex5-frame", dest="ex5_frame", choices=EX5_FRAMES)
    parser.add_argument("--tau-scale", dest="tau_scale", type=float)
    parser.add_argument("--condensed", action="store_true", default=None,
                        help="solve the statically condensed trace system")
    parser.add_argument("--p2-fallback", dest="fallback", action="store_true", default=None,
                        help="use closest points where a normal ray misses the curve")
    parser.add_argument("--log-level", dest="log_level")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transfer_hdg",
                                     description="HDG solver for curved domains with transfer paths")
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("convergence", help="run a refinement sweep")
    _add_run_options(conv)
    conv.add_argument("--docx", action="store_true", default=None, help="also write report.docx")

    solve = sub.add_parser("solve", help="solve one level and dump fields")
    _add_run_options(solve)
    solve.add_argument("--level", type=int, help="refinement parameter (default: last level)")

    mesh = sub.add_parser("mesh", help="generate a mesh file")
    mesh.add_argument("--geometry", required=True, choices=sorted(GEOMETRIES))
    mesh.add_argument("--fit", choices=FITS)
    mesh.add_argument("--n", type=int, help="refinement parameter")
    mesh.add_argument("--nodes", type=int, help="nodes on the longest curve (interpolated fit)")
    mesh.add_argument("--out", default="mesh.mesh")
    mesh.add_argument("--log-level", dest="log_level")
    return parser


def get_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file, environment and flags."""
    flags = {key: value for key, value in vars(args).items() if key not in ("command", "config", "level")}
    return load_run_config(flags, config_file=args.config)


def _report(result: dict) -> int:
    if result.get("success"):
        logger.info(result.get("message", "done"))
        return EXIT_OK
    logger.error(result.get("error", "failed"))
    return EXIT_USAGE if result.get("usage") else EXIT_FAILURE


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the subcommand and return the exit code."""
    args = build_parser().parse_args(argv)
    if args.command == "mesh":
        configure_logging(args.log_level)
        return _report(build_mesh(args.geometry, args.out, fit=args.fit, n=args.n, nodes=args.nodes))

    try:
        config = get_run_config(args)
    except ConfigError as exc:
        configure_logging(args.log_level)
        logger.error("Configuration error: %s", exc)
        return EXIT_USAGE
    try:
        ensure_directory(config.out)
    except OSError as exc:
        configure_logging(config.log_level)
        logger.error("Cannot create output directory %s: %s", config.out, exc)
        return EXIT_USAGE
    configure_logging(config.log_level, os.path.join(config.out, "run.log"))
    logger.info("Configuration: %s", config)

    if args.command == "convergence":
        return _report(run_convergence(config))
    return _report(solve_case(config, args.level))


def main():
    """Main entry point for the command line."""
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
