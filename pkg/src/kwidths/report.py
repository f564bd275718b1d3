"""CSV / JSON emission of scenario rows."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict

from .errors import WidthsError
from .scenarios import COLUMNS


class ReportError(WidthsError):
    pass


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def render(rows, fmt="csv"):
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        docs = [{k: _json_value(v) for k, v in asdict(r).items()} for r in rows]
        return json.dumps(docs, indent=2) + "\n"
    raise ValueError(f"format must be csv or json, got {fmt!r}")


def emit_report(rows, fmt="csv", path=None):
    """Write rows to ``path`` (or return the text when path is None). Empty rows are an error."""
    rows = list(rows)
    if not rows:
        raise ReportError("no rows to emit")
    text = render(rows, fmt)
    if path is None:
        return text
    try:
        with open(os.fspath(path), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ReportError(f"cannot write report to {path}: {exc.strerror or exc}") from exc
    return text
