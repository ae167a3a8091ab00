"""Line-oriented ``key = value`` run configuration, fail-closed.

Grammar: one ``key = value`` pair per line; blank lines and lines starting
with ``#`` are ignored.  Keys not in the command's schema, duplicate keys
and missing required keys are errors, with line numbers, so a typo can
never silently misconfigure an experiment.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import IoError, ParseError

__all__ = ["Field", "REQUIRED", "boolean", "parse_config", "read_config"]

REQUIRED = object()


@dataclass(frozen=True)
class Field:
    parse: Callable[[str], Any]
    default: Any = REQUIRED


def boolean(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(text: str, schema: dict[str, Field], source: str = "<config>") -> dict:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{source}: expected 'key = value'", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in schema:
            raise ParseError(f"{source}: unknown key {key!r}", line=lineno)
        if key in values:
            raise ParseError(f"{source}: duplicate key {key!r}", line=lineno)
        try:
            values[key] = schema[key].parse(value)
        except (ValueError, TypeError) as exc:
            raise ParseError(f"{source}: bad value for {key!r}: {exc}", line=lineno) from exc
    for key, fld in schema.items():
        if key not in values:
            if fld.default is REQUIRED:
                raise ParseError(f"{source}: missing required key {key!r}")
            values[key] = fld.default
    return values


def read_config(path, schema: dict[str, Field]) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, schema, source=str(path))
