"""Flat key-value config files, CSV output and run manifests.

Config grammar, one entry per line, UTF-8::

    # comment
    key = value        # trailing comments allowed

Keys are ``[A-Za-z_][A-Za-z0-9_]*``; values are the stripped remainder.
Blank lines are ignored; a repeated key is an error.
"""

from __future__ import annotations

import csv
import json
import platform
import re
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ConfigError(ValueError):
    """Bad configuration input; carries the file, line and field at fault."""

    def __init__(self, source, line, field, message):
        self.source = source
        self.line = line
        self.field = field
        self.message = message
        where = str(source)
        if line is not None:
            where += f":{line}"
        if field is not None:
            where += f": {field}"
        super().__init__(f"{where}: {message}")


class Value(str):
    """A config value string that remembers its source line."""

    line: int | None = None

    def __new__(cls, text, line=None):
        obj = super().__new__(cls, text)
        obj.line = line
        return obj


def parse_kv(text: str, source: str = "<string>") -> dict[str, Value]:
    entries: dict[str, Value] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(source, lineno, None, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not _KEY.match(key):
            raise ConfigError(source, lineno, key or None, "invalid key")
        if key in entries:
            raise ConfigError(source, lineno, key, f"duplicate key (first on line {entries[key].line})")
        if not value:
            raise ConfigError(source, lineno, key, "empty value")
        entries[key] = Value(value, lineno)
    return entries


def read_kv(path) -> dict[str, Value]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), None, None, f"cannot read: {exc.strerror}") from None
    return parse_kv(text, source=str(path))


def write_kv(path, mapping, header: str | None = None) -> None:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    for key, value in mapping.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enums
        return obj.value
    return obj


def make_manifest(subcommand, config, source=None, seed=None, outputs=()) -> dict:
    from . import __version__

    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "nera",
        "tool_version": __version__,
        "python": platform.python_version(),
        "subcommand": subcommand,
        "source": source,
        "rng_seed": seed,
        "config": _jsonable(config),
        "outputs": list(outputs),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def write_manifest(path, manifest) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=False) + "\n",
                          encoding="utf-8")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
