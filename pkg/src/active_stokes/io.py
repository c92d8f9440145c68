"""Plain-text outputs: CSV tables with a comment header, YAML metadata, content hashes.

CSV files are UTF-8 with LF line endings.  Lines starting with ``#`` form the
header block (column documentation and run parameters); the remaining lines
are the *body*: one column-name line followed by data rows.  Floats are
written with ``repr`` (shortest round-trip form), so identical inputs give
byte-identical bodies.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml


def to_builtin(obj):
    """Recursively convert numpy scalars/arrays, tuples and paths to plain Python."""
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def content_hash(obj) -> str:
    """sha1 of the canonical JSON form of ``obj`` (sorted keys, repr floats)."""
    text = json.dumps(to_builtin(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    s = str(v)
    if any(ch in s for ch in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def csv_body(columns, rows) -> str:
    lines = [",".join(columns)]
    for r in rows:
        if len(r) != len(columns):
            raise ValueError(f"row has {len(r)} cells, expected {len(columns)}")
        lines.append(",".join(_cell(v) for v in r))
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows, header: dict | None = None, column_doc: dict | None = None) -> str:
    """Write a CSV file and return the sha1 of its body.

    Parameters
    ----------
    columns : sequence of str
    rows : iterable of sequences
    header : dict, optional
        ``key: value`` lines of the comment block.
    column_doc : dict, optional
        One ``# column: description`` line per documented column.
    """
    head = []
    for k, v in (header or {}).items():
        head.append(f"# {k}: {json.dumps(to_builtin(v), sort_keys=True)}")
    if column_doc:
        head.append("# columns:")
        for c in columns:
            if c in column_doc:
                head.append(f"#   {c}: {column_doc[c]}")
    body = csv_body(columns, rows)
    text = ("\n".join(head) + "\n" if head else "") + body
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return hashlib.sha1(body.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CsvTable:
    header: list
    columns: list
    rows: list

    def column(self, name, cast=float):
        i = self.columns.index(name)
        return [cast(r[i]) for r in self.rows]


def read_csv(path):
    """Read a file written by :func:`write_csv` (cells are returned as strings)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    head = [l for l in lines if l.startswith("#")]
    rest = [l for l in lines if l and not l.startswith("#")]
    parsed = list(csv.reader(rest))
    return CsvTable(head, parsed[0], parsed[1:])


def csv_body_of(path) -> str:
    """The non-comment part of a CSV file, verbatim."""
    text = Path(path).read_text(encoding="utf-8")
    return "".join(l for l in text.splitlines(keepends=True) if not l.startswith("#"))


def write_metadata(path, meta: dict):
    """Write YAML metadata (UTF-8, LF, keys in insertion order)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    text = yaml.safe_dump(to_builtin(meta), sort_keys=False, allow_unicode=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_structured(path):
    """Load a YAML or JSON document (JSON is a subset of YAML)."""
    return yaml.safe_load(Path(path).read_text(encoding="utf-8"))
