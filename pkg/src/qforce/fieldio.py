"""CSV + JSON-header serialization of sampled fields, and atomic file writes."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .fields import Grid, Role, ScalarField


def atomic_write_text(path, text: str) -> Path:
    """Write via a temp file in the target directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, payload) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def fmt(x: float) -> str:
    # 17 significant digits round-trips any double
    return format(float(x), ".17g")


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return atomic_write_text(path, buf.getvalue())


def field_header(field: ScalarField, units: Optional[dict] = None, name: str = "") -> dict:
    return {
        "name": name,
        "grid": field.grid.metadata(),
        "role": field.role.value,
        "units": units or {"hbar": 1.0, "m": 1.0, "c": 1.0, "e": 1.0},
        "columns": list(field.grid.axis_names) + ["value"] + (["mask"] if field.mask is not None else []),
        "parity": field.parity,
    }


def save_field(field: ScalarField, stem, units: Optional[dict] = None) -> tuple:
    """Write ``<stem>.csv`` (one row per grid point) and ``<stem>.json`` (header)."""
    stem = Path(stem)
    coords = [c.ravel() for c in field.grid.mesh()]
    values = field.values.ravel()
    cols = coords + [values]
    if field.mask is not None:
        cols.append(field.mask.ravel().astype(int))
    header = field_header(field, units, stem.name)

    def rows():
        for i in range(values.size):
            row = [fmt(c[i]) for c in coords] + [fmt(values[i])]
            if field.mask is not None:
                row.append(int(field.mask.ravel()[i]))
            yield row

    csv_path = write_rows(stem.with_suffix(".csv"), header["columns"], rows())
    json_path = write_json(stem.with_suffix(".json"), header)
    return csv_path, json_path


def load_field(stem) -> ScalarField:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    grid = Grid.from_metadata(header["grid"])
    with open(stem.with_suffix(".csv"), newline="") as fh:
        reader = csv.reader(fh)
        cols = next(reader)
        data = [row for row in reader]
    vi = cols.index("value")
    values = np.array([float(r[vi]) for r in data]).reshape(grid.shape)
    mask = None
    if "mask" in cols:
        mi = cols.index("mask")
        mask = np.array([bool(int(r[mi])) for r in data]).reshape(grid.shape)
    return ScalarField(grid, values, Role(header["role"]), mask, header.get("parity"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
