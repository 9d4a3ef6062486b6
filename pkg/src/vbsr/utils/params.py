"""Utilities to load experiment configuration.

Reads a TOML file with optional ``[experiment]``, ``[engine]`` and ``[prior]``
tables. The file is taken from the explicit path if given, else from the
VBSR_CONFIG environment variable; without either every value is defaulted.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any

try:  # Python 3.11+
    import tomllib as _tomllib  # type: ignore[import-not-found]
except ImportError:  # Python 3.10 fallback
    import tomli as _tomllib

from vbsr.exceptions import ConfigError

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "VBSR_CONFIG"
WORKERS_ENV_VAR = "VBSR_WORKERS"

CONFIG_TABLES = ("experiment", "engine", "prior")


def _env_config_path() -> Path | None:
    """Return path named by VBSR_CONFIG if set."""
    value = os.environ.get(CONFIG_ENV_VAR)
    return Path(value) if value else None


def default_workers() -> int:
    """Worker count from VBSR_WORKERS, else 1."""
    raw = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV_VAR} must be an integer, got {raw!r}") from exc
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV_VAR} must be at least 1, got {workers}")
    return workers


def load_config_tables(path: Path | None = None) -> dict[str, dict[str, Any]]:
    """Load the configuration tables from TOML.

    Returns:
        Mapping with the keys of ``CONFIG_TABLES``; missing tables are empty.

    Raises:
        ConfigError: If the file is missing, unparsable or has unknown tables
    """
    p = path if path is not None else _env_config_path()
    tables: dict[str, dict[str, Any]] = {name: {} for name in CONFIG_TABLES}
    if p is None:
        return tables
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")

    try:
        with p.open("rb") as fp:
            data = _tomllib.load(fp)
    except _tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {p}: {exc}") from exc

    unknown = sorted(set(data) - set(CONFIG_TABLES))
    if unknown:
        raise ConfigError(f"unknown config table(s) in {p}: {', '.join(unknown)}")
    for name in CONFIG_TABLES:
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] in {p} must be a table")
        tables[name] = dict(section)
    logger.debug("Loaded configuration from %s", p)
    return tables
