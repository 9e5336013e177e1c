"""File writers: legacy VTK, CSV and JSON with a fixed decimal policy.

Floats are written with 17 significant digits so every double round-trips
bit-exactly.  All writes go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

VTK_TRIANGLE = 5
VTK_HEXAHEDRON = 12


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    tmp = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# JSON


def _json_value(v, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if not math.isfinite(x):
            return json.dumps(fmt(x))
        return fmt(x)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(x, indent, level + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        if all(isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool) for x in v):
            return "[" + ", ".join(_json_value(x, indent, level + 1) for x in v) + "]"
        items = [pad + _json_value(x, indent, level + 1) for x in v]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps_json(obj, indent=2) -> str:
    return _json_value(obj, indent, 0) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write(path, dumps_json(obj))


# ---------------------------------------------------------------------------
# CSV


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(fmt(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows) -> Path:
    return atomic_write(path, csv_text(header, rows))


def read_csv(path):
    text = Path(path).read_text().splitlines()
    header = text[0].split(",")
    rows = [line.split(",") for line in text[1:] if line]
    return header, rows


# ---------------------------------------------------------------------------
# VTK


def vtk_text(points, cells, cell_type, point_data=None, cell_data=None, title="twoscale_plate") -> str:
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    if len(points) == 0 or len(cells) == 0:
        raise ValueError("refusing to export an empty mesh")
    if points.shape[1] == 2:
        points = np.column_stack([points, np.zeros(len(points))])
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(points)} double"]
    out += [" ".join(fmt(x) for x in p) for p in points]
    k = cells.shape[1]
    out.append(f"CELLS {len(cells)} {len(cells) * (k + 1)}")
    out += [f"{k} " + " ".join(str(i) for i in c) for c in cells]
    out.append(f"CELL_TYPES {len(cells)}")
    out += [str(cell_type)] * len(cells)

    def block(data, n):
        lines = []
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape[0] != n:
                raise ValueError(f"data array {name!r} has wrong length")
            if arr.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [fmt(v) for v in arr]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(fmt(x) for x in v) for v in arr]
        return lines

    if point_data:
        out.append(f"POINT_DATA {len(points)}")
        out += block(point_data, len(points))
    if cell_data:
        out.append(f"CELL_DATA {len(cells)}")
        out += block(cell_data, len(cells))
    return "\n".join(out) + "\n"


def write_vtk(path, points, cells, cell_type, point_data=None, cell_data=None) -> Path:
    return atomic_write(path, vtk_text(points, cells, cell_type, point_data, cell_data))


def read_vtk_points_cells(path):
    """Minimal reader for files produced by :func:`write_vtk`."""
    lines = Path(path).read_text().splitlines()
    i = lines.index(next(l for l in lines if l.startswith("POINTS")))
    n = int(lines[i].split()[1])
    pts = np.array([[float(x) for x in lines[i + 1 + k].split()] for k in range(n)])
    j = i + 1 + n
    m = int(lines[j].split()[1])
    cells = np.array([[int(x) for x in lines[j + 1 + k].split()[1:]] for k in range(m)])
    return pts, cells
