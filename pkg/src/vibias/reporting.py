"""Deterministic CSV/JSON rendering shared by the CLI and the suite."""
from __future__ import annotations

import io
import json
import math
from typing import Iterable, Sequence


def fmt_value(x) -> str:
    """Shortest-roundtrip decimal for floats; plain text otherwise."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _csv_field(s: str) -> str:
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def render_csv(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(",".join(_csv_field(c) for c in columns) + "\n")
    for row in rows:
        buf.write(",".join(_csv_field(fmt_value(v)) for v in row) + "\n")
    return buf.getvalue()


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
