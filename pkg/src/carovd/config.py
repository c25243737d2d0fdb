"""Flat UTF-8 key-value config files with `include` support.

Syntax, one entry per line:
    key = value
    include relative/or/absolute/path
    # comment

Later keys override earlier ones; includes are resolved depth-first
relative to the including file. Cycles are rejected.
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_config(path: str | Path, _seen: frozenset[Path] = frozenset()) -> dict[str, str]:
    path = Path(path).resolve()
    if path in _seen:
        raise ConfigError(f"config include cycle at {path}")
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text("utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("include ") or line.startswith("include\t"):
            target = line.split(None, 1)[1].strip()
            included = parse_config(
                path.parent / target, _seen | {path}
            )
            entries.update(included)
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def load_config(path: str | Path | None) -> dict[str, str]:
    return parse_config(path) if path else {}


def get_int(cfg: dict[str, str], key: str, default: int) -> int:
    return int(cfg[key]) if key in cfg else default


def get_float(cfg: dict[str, str], key: str, default: float) -> float:
    return float(cfg[key]) if key in cfg else default


def get_str(cfg: dict[str, str], key: str, default: str) -> str:
    return cfg.get(key, default)
