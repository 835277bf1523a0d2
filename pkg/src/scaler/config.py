"""Engine-wide configuration: documented defaults, TOML file, then flags.

Precedence is defaults < file < flags.  Auth tokens are referenced by
environment-variable name only; the file never stores a secret.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigParseError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class GlobalConfig:
    # sandbox
    workers: int = max(1, os.cpu_count() or 1)
    time_limit_ms: int = 10_000
    byte_budget: int = 12_000
    kill_grace_ms: int = 100
    # controller
    tau: float = 0.5
    beta: float = 1.0
    # curation
    k_slope: int = 10
    k_zero: int = 5
    k_sat: int = 5
    active_size: int = 64
    # synthesis
    ratio_threshold: float = 32.0
    level_cap: int = 24
    deep_instances: int = 16
    breadth_configs: int = 5
    breadth_seeds: int = 4
    # optional completion endpoint
    endpoint_url: str = ""
    endpoint_token_env: str = ""
    endpoint_model: str = ""


_SECTIONS = {
    "sandbox": ("workers", "time_limit_ms", "byte_budget", "kill_grace_ms"),
    "controller": ("tau", "beta"),
    "curation": ("k_slope", "k_zero", "k_sat", "active_size"),
    "synthesis": (
        "ratio_threshold",
        "level_cap",
        "deep_instances",
        "breadth_configs",
        "breadth_seeds",
    ),
    "endpoint": ("endpoint_url", "endpoint_token_env", "endpoint_model"),
}
_ENDPOINT_KEYS = {"url": "endpoint_url", "token_env": "endpoint_token_env", "model": "endpoint_model"}


def load_config(path: str | Path | None) -> GlobalConfig:
    """Defaults, overridden by the TOML file at ``path`` when given."""
    config = GlobalConfig()
    if path is None:
        return config
    file_path = Path(path)
    if not file_path.is_file():
        raise ConfigParseError(f"config file {file_path} does not exist")
    try:
        data = tomllib.loads(file_path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"{file_path}: {exc}") from exc

    updates: dict[str, Any] = {}
    for section, payload in data.items():
        if section not in _SECTIONS:
            raise ConfigParseError(f"{file_path}: unknown section [{section}]")
        if not isinstance(payload, dict):
            raise ConfigParseError(f"{file_path}: [{section}] must be a table")
        for key, value in payload.items():
            field_name = _ENDPOINT_KEYS.get(key, key) if section == "endpoint" else key
            if field_name not in _SECTIONS[section]:
                raise ConfigParseError(
                    f"{file_path}: unknown key {key!r} in section [{section}]"
                )
            updates[field_name] = value
    return _apply(config, updates, source=str(file_path))


def apply_overrides(config: GlobalConfig, overrides: dict[str, Any]) -> GlobalConfig:
    """Apply non-None flag values on top of the current configuration."""
    return _apply(config, {k: v for k, v in overrides.items() if v is not None},
                  source="flags")


def _apply(config: GlobalConfig, updates: dict[str, Any], *, source: str) -> GlobalConfig:
    kinds = {f.name: f.type for f in fields(GlobalConfig)}
    coerced: dict[str, Any] = {}
    for key, value in updates.items():
        if key not in kinds:
            raise ConfigParseError(f"{source}: unknown configuration key {key!r}")
        current = getattr(config, key)
        if isinstance(current, bool):
            coerced[key] = bool(value)
        elif isinstance(current, int):
            if isinstance(value, float) and not value.is_integer():
                raise ConfigParseError(f"{source}: {key} must be an integer")
            coerced[key] = int(value)
        elif isinstance(current, float):
            coerced[key] = float(value)
        else:
            coerced[key] = str(value)
    return replace(config, **coerced)
