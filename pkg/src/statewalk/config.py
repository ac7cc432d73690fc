"""Key-value config files.

The format is INI-like: ``key = value`` lines, ``#``/``;`` comments, and
optional ``[section]`` headers.  Keys are flattened to ``section.key``;
keys before any header stay bare.  So ``[reward]\\nmin_reward = 0`` and a
bare ``reward.min_reward = 0`` are equivalent.
"""

from __future__ import annotations

import configparser
import os
from pathlib import Path

from .errors import ConfigError

CONFIG_ENV = "STATEWALK_CONFIG"
_ROOT = "__root__"


def parse_kv(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(f"[{_ROOT}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    flat: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            flat[key if section == _ROOT else f"{section}.{key}"] = value.strip()
    return flat


def load_kv(path: str | os.PathLike) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_kv(text)


def load_config(path: str | os.PathLike | None = None) -> dict[str, str]:
    """Load the main config from ``path`` or ``$STATEWALK_CONFIG``; empty if neither."""
    path = path or os.environ.get(CONFIG_ENV)
    return load_kv(path) if path else {}


def section(flat: dict[str, str], prefix: str) -> dict[str, str]:
    """Sub-mapping of keys under ``prefix.`` with the prefix removed."""
    p = prefix + "."
    return {k[len(p):]: v for k, v in flat.items() if k.startswith(p)}


def as_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def as_list(value: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in value.split(",") if x.strip())


def as_float(value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"not a number: {value!r}") from None


def as_int(value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"not an integer: {value!r}") from None
