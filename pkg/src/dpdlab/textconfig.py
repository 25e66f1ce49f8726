"""Flat ``key = value`` text format used for configs and model checkpoints.

Keys are dotted paths (``pa.noise_variance``), values are JSON literals, so
lists, strings, booleans and numbers all round-trip without a custom grammar.
Lines starting with ``#`` and blank lines are ignored.
"""

from __future__ import annotations

import json
from pathlib import Path


class ConfigError(ValueError):
    """Raised when a config or checkpoint file cannot be parsed or validated."""


def parse_text(text: str, source: str = "<string>") -> dict:
    """Parse ``key = value`` lines into a flat dict of JSON-decoded values."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, payload = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = json.loads(payload.strip())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return values


def load_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_text(text, source=str(path))


def format_entries(entries: dict) -> str:
    """Serialize a flat dict back to the text format (insertion order kept)."""
    lines = []
    for key, value in entries.items():
        lines.append(f"{key} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"


def save_file(path: str | Path, entries: dict, header: str | None = None) -> None:
    text = format_entries(entries)
    if header:
        text = "".join(f"# {line}\n" for line in header.splitlines()) + text
    Path(path).write_text(text)


def take(values: dict, key: str, kind, source: str = "config"):
    """Pop a required key, checking its JSON type."""
    if key not in values:
        raise ConfigError(f"{source}: missing key {key!r}")
    value = values.pop(key)
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{source}: key {key!r} has wrong type {type(value).__name__}")
    return value


def take_optional(values: dict, key: str, kind, default=None, source: str = "config"):
    if key not in values:
        return default
    return take(values, key, kind, source)


def ensure_consumed(values: dict, source: str = "config") -> None:
    if values:
        unknown = ", ".join(sorted(values))
        raise ConfigError(f"{source}: unknown keys: {unknown}")
