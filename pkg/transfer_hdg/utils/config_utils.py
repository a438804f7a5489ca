"""
Run configuration: built-in defaults, a key=value file, TRANSFER_HDG_* environment
variables and command-line flags, in increasing order of precedence.
"""
import logging
import os
from dataclasses import dataclass, fields, replace
from typing import Any, Dict, Mapping, Optional, Tuple

from transfer_hdg.core.analysis import CASE_LABELS, EX5_FRAMES, FITS, case
from transfer_hdg.core.errors import ConfigError
from transfer_hdg.core.paths import STRATEGIES

logger = logging.getLogger(__name__)

ENV_PREFIX = "TRANSFER_HDG_"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass(frozen=True)
class RunConfig:
    case: str = "ex1"
    k: int = 1
    levels: Optional[Tuple[int, ...]] = None
    paths: Optional[str] = None
    fit: Optional[str] = None
    tol: float = 1e-10
    out: str = "out"
    mesh_file: Optional[str] = None
    ex5_frame: str = "preimage"
    condensed: bool = False
    docx: bool = False
    fallback: bool = False
    tau_scale: float = 1.0
    log_level: str = "INFO"


FIELD_NAMES = tuple(f.name for f in fields(RunConfig))


def _parse_bool(key: str, raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got '{raw}'")


def _parse_levels(raw: str) -> Tuple[int, ...]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"levels: expected integers, got '{raw}'") from exc


def parse_value(key: str, raw: Any) -> Any:
    """Convert a textual setting to the type of the RunConfig field."""
    if not isinstance(raw, str):
        return raw
    try:
        if key == "k":
            return int(raw)
        if key in ("tol", "tau_scale"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse '{raw}'") from exc
    if key == "levels":
        return _parse_levels(raw)
    if key in ("condensed", "docx", "fallback"):
        return _parse_bool(key, raw)
    if key == "log_level":
        return raw.strip().upper()
    if key in ("mesh_file",) and not raw.strip():
        return None
    return raw.strip()


def read_config_file(path: str) -> Dict[str, Any]:
    """Flat key=value file; '#' starts a comment line, blank lines are skipped."""
    values: Dict[str, Any] = {}
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
    for number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{number}: expected key=value")
        key, raw = (part.strip() for part in text.split("=", 1))
        key = key.replace("-", "_")
        if key not in FIELD_NAMES:
            raise ConfigError(f"{path}:{number}: unknown setting '{key}'")
        values[key] = parse_value(key, raw)
    return values


def environment_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    values = {}
    for key in FIELD_NAMES:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            values[key] = parse_value(key, raw)
    return values


def validate_config(config: RunConfig) -> RunConfig:
    """Fill case defaults and check every setting; raises ConfigError."""
    if config.case not in CASE_LABELS:
        raise ConfigError(f"Unknown case '{config.case}', expected one of {', '.join(CASE_LABELS)}")
    if config.ex5_frame not in EX5_FRAMES:
        raise ConfigError(f"ex5_frame must be one of {EX5_FRAMES}, got '{config.ex5_frame}'")
    mc = case(config.case, config.ex5_frame)
    config = replace(
        config,
        levels=tuple(config.levels) if config.levels is not None else mc.levels,
        paths=config.paths or mc.strategy,
        fit=config.fit or mc.fit,
    )
    if not 0 <= config.k <= 3:
        raise ConfigError(f"k must be in [0, 3], got {config.k}")
    if not config.levels:
        raise ConfigError("At least one refinement level is required")
    if any(level < 1 for level in config.levels):
        raise ConfigError(f"Levels must be positive integers, got {config.levels}")
    if config.paths not in STRATEGIES:
        raise ConfigError(f"paths must be one of {STRATEGIES}, got '{config.paths}'")
    if config.fit not in FITS:
        raise ConfigError(f"fit must be one of {FITS}, got '{config.fit}'")
    if mc.has_interface and config.fit != "interpolated":
        raise ConfigError(f"Interface case {config.case} requires the interpolated fit")
    if config.tol <= 0:
        raise ConfigError(f"tol must be positive, got {config.tol}")
    if config.tau_scale <= 0:
        raise ConfigError(f"tau_scale must be positive, got {config.tau_scale}")
    if config.log_level not in LOG_LEVELS:
        raise ConfigError(f"log_level must be one of {LOG_LEVELS}, got '{config.log_level}'")
    return config


def load_run_config(flags: Optional[Mapping[str, Any]] = None, config_file: Optional[str] = None,
                    environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Merge the configuration layers and validate the result.

    Args:
        flags: Command-line values; None entries mean "not given"
        config_file: Optional key=value file
        environ: Environment mapping (os.environ by default)

    Returns:
        Validated RunConfig with case defaults filled in
    """
    values: Dict[str, Any] = {}
    if config_file:
        values.update(read_config_file(config_file))
    values.update(environment_overrides(environ))
    for key, value in (flags or {}).items():
        if value is not None and key in FIELD_NAMES:
            values[key] = parse_value(key, value)
    config = validate_config(RunConfig(**values))
    logger.debug("Run configuration: %s", config)
    return config
