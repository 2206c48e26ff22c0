"""Configuration file handling for steiner-laminar."""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml


# Default configuration values
DEFAULT_CONFIG: dict[str, Any] = {
    "backend": "dp",
    "threads": 1,
    "format": "json",
    "keep_all": False,
    "refactor_every": 100,
    "tolerances": {
        "feasibility": 1e-8,
        "optimality": 1e-9,
        "integrality": 1e-6,
        "pivot": 1e-10,
    },
}

# Default config file content
DEFAULT_CONFIG_YAML = """\
# steiner-laminar configuration
# Location: ~/.steiner-laminar.yml
#
# Settings can be removed or commented out to use built-in defaults.
# Built-in defaults are noted in [brackets] for each setting.

# Solver defaults
backend: dp            # dp (combinatorial) or lp (simplex on the family LP) [dp]
threads: 1             # Worker threads for the family pool [1]
keep_all: false        # Keep the objective of every family in reports [false]
refactor_every: 100    # Simplex pivots between basis refactorizations [100]

# Output defaults
format: json           # json or table [json]

# Numerical tolerances
tolerances:
  feasibility: 1.0e-8  # Max row residual of an optimal LP point [1e-8]
  optimality: 1.0e-9   # Reduced-cost threshold for pricing [1e-9]
  integrality: 1.0e-6  # Max distance from {0,1} accepted as integral [1e-6]
  pivot: 1.0e-10       # Smallest admissible pivot magnitude [1e-10]
"""

THREADS_ENV_VAR = "STEINER_LAMINAR_THREADS"


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by the simplex, the driver and verification."""

    feasibility: float = 1e-8
    optimality: float = 1e-9
    integrality: float = 1e-6
    pivot: float = 1e-10
    refactor_every: int = 100

    @classmethod
    def from_config(cls, config: dict[str, Any]) -> "Tolerances":
        """Build tolerances from a merged config dict."""
        tol = config.get("tolerances") or {}
        return cls(
            feasibility=float(tol.get("feasibility", cls.feasibility)),
            optimality=float(tol.get("optimality", cls.optimality)),
            integrality=float(tol.get("integrality", cls.integrality)),
            pivot=float(tol.get("pivot", cls.pivot)),
            refactor_every=int(config.get("refactor_every", cls.refactor_every)),
        )

    def with_overrides(
        self,
        feasibility: float | None = None,
        integrality: float | None = None,
    ) -> "Tolerances":
        """Return a copy with CLI overrides applied (None keeps the current value)."""
        return Tolerances(
            feasibility=self.feasibility if feasibility is None else feasibility,
            optimality=self.optimality,
            integrality=self.integrality if integrality is None else integrality,
            pivot=self.pivot,
            refactor_every=self.refactor_every,
        )


def get_config_path() -> Path:
    """Return the default config file path (~/.steiner-laminar.yml)."""
    return Path.home() / ".steiner-laminar.yml"


def load_config(path: Path | None = None) -> tuple[dict[str, Any], bool]:
    """Load configuration from file, auto-creating if missing.

    Args:
        path: Optional path to config file. Uses ~/.steiner-laminar.yml if not specified.

    Returns:
        Tuple of (config dict, was_created flag). was_created is True if
        config file was auto-created on this call.

    Raises:
        ValueError: If the file is not valid YAML.
    """
    config_path = path or get_config_path()
    was_created = False

    config = _merge_dicts(DEFAULT_CONFIG, {})

    if not config_path.exists():
        try:
            config_path.write_text(DEFAULT_CONFIG_YAML, encoding="utf-8")
            was_created = True
        except OSError:
            return config, False

    try:
        with open(config_path, encoding="utf-8") as f:
            file_config = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ValueError(f"Invalid YAML in config file {config_path}: {e}") from e

    return _merge_dicts(config, file_config), was_created


def _merge_dicts(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Deep merge two dictionaries. Override values take precedence."""
    result = base.copy()
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = _merge_dicts(result[key], value)
        else:
            result[key] = value
    return result


def resolve_threads(cli_value: int | None, config: dict[str, Any]) -> int:
    """Resolve the worker count: flag, then env var, then config file.

    Raises:
        ValueError: If the resolved value is not a positive integer.
    """
    if cli_value is not None:
        threads = cli_value
    elif os.environ.get(THREADS_ENV_VAR):
        try:
            threads = int(os.environ[THREADS_ENV_VAR])
        except ValueError as e:
            raise ValueError(
                f"{THREADS_ENV_VAR} must be an integer, got {os.environ[THREADS_ENV_VAR]!r}"
            ) from e
    else:
        threads = int(config.get("threads", 1))
    if threads < 1:
        raise ValueError(f"Thread count must be >= 1, got {threads}")
    return threads


def resolve_output_path(folder: str) -> Path:
    """Resolve output folder path relative to cwd, creating it if needed."""
    output_path = Path(folder).expanduser().resolve()
    output_path.mkdir(parents=True, exist_ok=True)
    return output_path


# Module-level cached config for CLI defaults
_cached_config: dict[str, Any] | None = None
_config_was_created: bool = False


def get_config_for_defaults() -> dict[str, Any]:
    """Load config once and cache for CLI option defaults.

    Silently creates the config file if missing. Unreadable or invalid
    files fall back to the built-in defaults.
    """
    global _cached_config, _config_was_created

    if _cached_config is None:
        try:
            _cached_config, _config_was_created = load_config()
        except (ValueError, OSError):
            _cached_config = _merge_dicts(DEFAULT_CONFIG, {})

    return _cached_config


def config_was_auto_created() -> bool:
    """Return True if config file was auto-created during this session."""
    return _config_was_created


def clear_config_cache() -> None:
    """Clear the cached config (useful for testing)."""
    global _cached_config, _config_was_created
    _cached_config = None
    _config_was_created = False
