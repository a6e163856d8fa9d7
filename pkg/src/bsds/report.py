"""Report bundles and their on-disk forms.

A bundle is a set of named tables plus metadata (config hash, seed range,
parameters) and free-text notes. ``tabular`` output writes one CSV per table
(plot series under ``series/``) each prefixed by ``# key: value`` metadata
lines; ``structured`` output writes a single ``report.json``. Both are
byte-stable: tables keep insertion order, metadata keys are sorted and floats
are written in shortest round-trip form.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

from .errors import InputError

FORMATS = ("tabular", "structured")


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values for {len(self.columns)} columns")
        self.rows.append(tuple(values))


@dataclass
class ReportBundle:
    meta: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def table(self, name: str, columns) -> Table:
        t = Table(tuple(columns))
        self.tables[name] = t
        return t


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    return value


def table_text(bundle: ReportBundle, name: str) -> str:
    buf = io.StringIO()
    for key in sorted(bundle.meta):
        buf.write(f"# {key}: {_cell(bundle.meta[key])}\n")
    writer = csv.writer(buf, lineterminator="\n")
    t = bundle.tables[name]
    writer.writerow(t.columns)
    for row in t.rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def structured_text(bundle: ReportBundle) -> str:
    doc = {
        "meta": _json_value(dict(sorted(bundle.meta.items()))),
        "tables": {
            name: {"columns": list(t.columns), "rows": [_json_value(list(r)) for r in t.rows]}
            for name, t in bundle.tables.items()
        },
        "notes": list(bundle.notes),
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def emit_report(bundle: ReportBundle, outdir: str, fmt: str = "tabular") -> list:
    """Write the bundle under ``outdir``; returns the written paths in write order."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    paths = []
    if fmt == "structured":
        path = os.path.join(outdir, "report.json")
        _write(path, structured_text(bundle))
        return [path]
    for name in bundle.tables:
        path = os.path.join(outdir, *name.split("/")) + ".csv"
        _write(path, table_text(bundle, name))
        paths.append(path)
    if bundle.notes:
        path = os.path.join(outdir, "notes.txt")
        _write(path, "".join(n + "\n" for n in bundle.notes))
        paths.append(path)
    return paths


def read_table(path: str) -> tuple:
    """Parse an emitted CSV table into ``(meta, columns, rows)`` with string cells."""
    meta, lines = {}, []
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            for line in fh:
                if line.startswith("#") and not lines:
                    key, _, value = line[1:].strip().partition(":")
                    meta[key.strip()] = value.strip()
                else:
                    lines.append(line)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(lines))
    if not rows:
        raise InputError(f"{path} has no header row")
    return meta, tuple(rows[0]), rows[1:]


def _number(text: str) -> Optional[float]:
    return None if text == "" else float(text)


def read_dqs_table(path: str) -> list:
    """Rows of an emitted ``dqs.csv`` as dicts; numeric columns become floats (or None)."""
    _, columns, rows = read_table(path)
    out = []
    for row in rows:
        rec = {}
        for col, cell in zip(columns, row):
            rec[col] = cell if col == "proposer" else _number(cell)
        out.append(rec)
    return out
