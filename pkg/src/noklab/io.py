"""CSV, ``key=value`` config files and run manifests."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from .errors import ParameterError


def format_value(value) -> str:
    """Render one CSV cell; reals use 17 significant digits so they round-trip."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    if hasattr(value, "item"):  # numpy scalars
        return format_value(value.item())
    if hasattr(value, "value"):  # enums
        return str(value.value)
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(target: str | Path | None, header: Sequence[str], rows: Iterable[Sequence], stream: TextIO | None = None):
    """Write to ``target``, or to ``stream`` (default stdout) when ``target`` is None."""
    text = csv_text(header, rows)
    if target is None:
        (stream or sys.stdout).write(text)
        return None
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParameterError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParameterError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        out[key.replace("-", "_")] = value.strip()
    return out


def config_text(items: Iterable[tuple[str, object]]) -> str:
    return "".join(f"{k}={format_value(v)}\n" for k, v in items)


@dataclass
class RunManifest:
    subcommand: str
    parameters: list[tuple[str, object]]
    output_paths: list[str] = field(default_factory=list)
    tool_version: str = ""
    wall_time: float = 0.0
    error: str | None = None

    def to_json(self) -> str:
        data = asdict(self)
        data["parameters"] = {k: _jsonable(v) for k, v in self.parameters}
        return json.dumps(data, indent=2) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def _jsonable(v):
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return format_value(v)
