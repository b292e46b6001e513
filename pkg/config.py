from __future__ import annotations

"""config.py

Utility helpers to centralise simulator-wide configuration: the package
logger, environment variables, the default physical parameters and the
parameter files accepted by the command line.

Modules import what they need directly::

    from config import logger, DEFAULT_PARAMS, MAX_WORKERS, load_params

Parameter files are flat JSON objects using the same keys as the command-line
flags (``n_atoms``, ``delta``, ``rabi``, ``gamma0``, ``gamma_plus``,
``gamma_minus``, ``omega0`` and optionally ``theta``). Values missing from a
file fall back to ``defaults.json`` and then to the built-in defaults below.
"""

import json
import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict

import psutil
from dotenv import load_dotenv

from battery.errors import ValidationError

# ---------------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------------

def _setup_logger() -> logging.Logger:
    """Return the package logger with a sensible default format.

    The log level can be tuned through the *LOG_LEVEL* environment variable so
    that long sweeps can run quietly at *WARNING* while integrator diagnostics
    are available at *DEBUG* without code changes.
    """
    level = os.getenv("LOG_LEVEL", "INFO").upper()
    logger = logging.getLogger("dicke_battery")
    if not logger.handlers:  # Avoid duplicate setup
        logger.setLevel(level)
        handler = logging.StreamHandler()
        handler.setFormatter(
            logging.Formatter("[%(asctime)s] %(levelname)s - %(name)s: %(message)s")
        )
        logger.addHandler(handler)
        logger.propagate = False
    return logger


# Loads .env into process env, if present. Must run before the logger reads
# LOG_LEVEL.
load_dotenv()

logger = _setup_logger()

# ---------------------------------------------------------------------------
# Environment variables
# ---------------------------------------------------------------------------

def _default_workers() -> int:
    env_value = os.getenv("DICKE_MAX_WORKERS")
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError:
            logger.warning("Ignoring non-integer DICKE_MAX_WORKERS=%r", env_value)
    return psutil.cpu_count(logical=False) or 1


MAX_WORKERS: int = _default_workers()

# ---------------------------------------------------------------------------
# Physical parameters
# ---------------------------------------------------------------------------

PARAM_KEYS: tuple[str, ...] = (
    "n_atoms",
    "delta",
    "rabi",
    "gamma0",
    "gamma_plus",
    "gamma_minus",
    "omega0",
)
OPTIONAL_KEYS: tuple[str, ...] = ("theta",)

# gamma_minus = 1 is the rate unit; omega0 only scales reported energies.
_BUILTIN_PARAMS: Dict[str, Any] = {
    "n_atoms": 4,
    "delta": 0.0,
    "rabi": 40.0,
    "gamma0": 1.0,
    "gamma_plus": 1.0,
    "gamma_minus": 1.0,
    "omega0": 1.0,
}


def _check_keys(data: Dict[str, Any], path: Path) -> None:
    unknown = sorted(set(data) - set(PARAM_KEYS) - set(OPTIONAL_KEYS))
    if unknown:
        msg = f"Unknown parameter key(s) in '{path}': {', '.join(unknown)}"
        logger.error(msg)
        raise ValidationError(msg)


def _read_json(path: Path) -> Dict[str, Any]:
    try:
        with path.open(encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        msg = f"File '{path}' not found."
        logger.exception(msg)
        raise ValidationError(msg) from exc
    except json.JSONDecodeError as exc:
        msg = f"Invalid JSON in '{path}' at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        logger.exception(msg)
        raise ValidationError(msg) from exc
    if not isinstance(data, dict):
        msg = f"'{path}' must contain a flat JSON object, got {type(data).__name__}"
        logger.error(msg)
        raise ValidationError(msg)
    _check_keys(data, path)
    return data


@lru_cache(maxsize=1)
def load_defaults(file_path: str | Path | None = None) -> dict[str, Any]:
    """Load the default parameters and merge them with the built-in values.

    Parameters
    ----------
    file_path
        Optional path to the JSON file. When omitted the function honours the
        *DICKE_DEFAULTS* environment variable and otherwise looks for a
        *defaults.json* file located alongside this module.
    """
    env_path = os.getenv("DICKE_DEFAULTS")
    if file_path:
        path = Path(file_path)
    elif env_path:
        path = Path(env_path)
    else:
        path = Path(__file__).with_name("defaults.json")
        if not path.exists():
            logger.debug("No %s next to config.py; using built-in defaults", path.name)
            return dict(_BUILTIN_PARAMS)
    data = _read_json(path)
    logger.debug("Loaded default parameters from %s", path)
    return {**_BUILTIN_PARAMS, **data}


@lru_cache(maxsize=16)
def load_params(file_path: str | Path | None = None) -> dict[str, Any]:
    """Return the parameter dictionary for *file_path* layered on the defaults.

    The result is cached so repeated scenario runs in one process do not
    re-read the file. Callers must not mutate the returned dictionary.
    """
    if file_path is None:
        return dict(DEFAULT_PARAMS)
    path = Path(file_path)
    data = _read_json(path)
    logger.debug("Loaded parameter file %s: %s", path, data)
    merged = {**DEFAULT_PARAMS, **data}
    # A file that sets the drive itself must not inherit the default angle.
    if ("delta" in data or "rabi" in data) and "theta" not in data:
        merged.pop("theta", None)
    return merged


# ---------------------------------------------------------------------------
# Public constants exposed at import-time for convenience
# ---------------------------------------------------------------------------

DEFAULT_PARAMS: Dict[str, Any] = load_defaults()

# What this module exports when someone does *from config import *
__all__ = [
    "logger",
    "MAX_WORKERS",
    "PARAM_KEYS",
    "OPTIONAL_KEYS",
    "DEFAULT_PARAMS",
    "load_defaults",
    "load_params",
]
