"""Plain-text ``key = value`` files with optional ``[section]`` headers.

Every parameter file in the package (coefficient trees, vehicle data, controller
config, maneuver specs, trained networks) uses this format. Floats are written
with ``repr`` so that reading a file back gives bit-identical values.
"""

from __future__ import annotations

import configparser
import math
from pathlib import Path
from typing import Mapping

ROOT = "root"


def format_float(value: float) -> str:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"refusing to serialise non-finite value {value!r}")
    return repr(value)


def dumps(sections: Mapping[str, Mapping[str, object]], header: str | None = None) -> str:
    lines: list[str] = []
    if header:
        lines.extend(f"# {line}" for line in header.splitlines())
    for name, values in sections.items():
        if name != ROOT:
            if lines:
                lines.append("")
            lines.append(f"[{name}]")
        for key, value in values.items():
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = format_float(value)
            else:
                text = str(value)
            lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(
        interpolation=None, default_section="__defaults__", comment_prefixes=("#", ";")
    )
    parser.optionxform = str  # keys are case sensitive
    stripped = text.lstrip()
    if not stripped.startswith("["):
        text = f"[{ROOT}]\n" + text
    parser.read_string(text)
    return {name: dict(parser[name]) for name in parser.sections()}


def read(path: str | Path) -> dict[str, dict[str, str]]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    return loads(text)


def write(path: str | Path, sections: Mapping[str, Mapping[str, object]], header: str | None = None) -> None:
    path = Path(path)
    try:
        path.write_text(dumps(sections, header))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {text!r}")
