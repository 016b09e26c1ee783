"""Result tables and run summaries on disk."""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

OUT_DIR_ENV = "MDAIRCOMP_OUT_DIR"
DEFAULT_OUT_DIR = "results"


def out_dir(flag=None) -> Path:
    """``flag``, else ``$MDAIRCOMP_OUT_DIR``, else ``./results``."""
    return Path(flag or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)  # shortest round-trip form, stable across runs
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(x) for x in row])
    return path


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def to_jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if hasattr(x, "item"):  # numpy scalar
        return to_jsonable(x.item())
    return x


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_table(path_stem, header, rows, fmt: str = "csv") -> Path:
    """Write a table as ``<stem>.csv`` or as a list of objects in ``<stem>.json``."""
    stem = Path(path_stem)
    if fmt == "csv":
        return write_csv(stem.with_suffix(".csv"), header, rows)
    if fmt == "json":
        return write_json(stem.with_suffix(".json"), [dict(zip(header, row)) for row in rows])
    raise ValueError(f"unknown format {fmt!r}")
