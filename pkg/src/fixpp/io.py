"""
File formats.

Point patterns
    UTF-8 CSV with header ``group_id,x,y`` and one point per row.  Patterns
    appear in order of first occurrence of their ``group_id``.  Optional
    pattern labels live in a second CSV whose first column is ``group_id``.

Rasters
    A JSON header::

        {
          "format": "fixpp-raster",
          "window": [x_min, x_max, y_min, y_max],
          "nx": 64, "ny": 48,
          "registration": "node",
          "encoding": "csv",
          "payload": "saliency.csv"
        }

    ``registration`` is ``"node"`` (lattice on the window edges) or
    ``"pixel"`` (lattice at pixel centres).  ``encoding`` is ``"csv"`` (``ny``
    lines of ``nx`` comma-separated values, first line at ``y_min``) or
    ``"float64-le"`` (``nx * ny`` little-endian doubles, row-major).  The
    payload path is relative to the header.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .domain import CovariateField, PointPattern, Window
from .errors import DataFormatError, FixppError

__all__ = [
    "read_patterns_csv",
    "write_patterns_csv",
    "patterns_csv_text",
    "read_labels_csv",
    "read_raster",
    "write_raster",
    "dumps_json",
    "format_float",
]


def format_float(v):
    """Shortest round-trip text of a float."""
    return repr(float(v))


def dumps_json(obj):
    """Deterministic JSON text (fixed key order as given, trailing newline)."""
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def read_labels_csv(path):
    """``{group_id: {label: value}}`` from a labels CSV."""
    path = Path(path)
    out = {}
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0].strip() != "group_id" or len(header) < 2:
                raise DataFormatError("labels header must start with 'group_id'", path, 1)
            keys = [h.strip() for h in header[1:]]
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise DataFormatError(
                        f"expected {len(header)} fields, got {len(row)}", path, lineno
                    )
                gid = row[0].strip()
                if gid in out:
                    raise DataFormatError(f"duplicate group_id {gid!r}", path, lineno)
                out[gid] = {k: _auto(v.strip()) for k, v in zip(keys, row[1:])}
    except OSError as exc:
        raise DataFormatError(f"cannot read labels: {exc.strerror or exc}", path) from None
    return out


def _auto(text):
    try:
        v = float(text)
    except ValueError:
        return text
    return v if np.isfinite(v) else text


def read_patterns_csv(path, window, labels=None):
    """Read point patterns grouped by ``group_id``.

    Parameters
    ----------
    path : path-like
    window : Window
    labels : mapping or path-like, optional
        ``{group_id: {label: value}}`` or a labels CSV.

    Raises
    ------
    DataFormatError
        Malformed header or row, non-finite coordinate, or a point outside
        the window; the message names the file and line.
    """
    path = Path(path)
    if labels is not None and not isinstance(labels, dict):
        labels = read_labels_csv(labels)
    groups = {}
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["group_id", "x", "y"]:
                raise DataFormatError("header must be 'group_id,x,y'", path, 1)
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 3:
                    raise DataFormatError(f"expected 3 fields, got {len(row)}", path, lineno)
                gid = row[0].strip()
                if not gid:
                    raise DataFormatError("empty group_id", path, lineno)
                try:
                    x, y = float(row[1]), float(row[2])
                except ValueError:
                    raise DataFormatError(
                        f"coordinates must be numbers, got {row[1]!r}, {row[2]!r}", path, lineno
                    ) from None
                if not (np.isfinite(x) and np.isfinite(y)):
                    raise DataFormatError("coordinates must be finite", path, lineno)
                if not window.contains([[x, y]])[0]:
                    raise DataFormatError(
                        f"point ({x}, {y}) lies outside window {window.bounds}", path, lineno
                    )
                groups.setdefault(gid, []).append((x, y))
    except OSError as exc:
        raise DataFormatError(f"cannot read patterns: {exc.strerror or exc}", path) from None
    if labels:
        for gid in labels:
            groups.setdefault(gid, [])
    out = []
    for gid, pts in groups.items():
        lab = (labels or {}).get(gid, {})
        out.append(PointPattern(np.array(pts, dtype=float).reshape(-1, 2), window, gid, lab))
    return out


def patterns_csv_text(patterns):
    lines = ["group_id,x,y"]
    for i, p in enumerate(patterns):
        gid = p.group_id if p.group_id is not None else str(i)
        lines += [f"{gid},{format_float(x)},{format_float(y)}" for x, y in p.xy]
    return "\n".join(lines) + "\n"


def write_patterns_csv(path, patterns):
    Path(path).write_text(patterns_csv_text(patterns), encoding="utf-8")


def read_raster(path):
    """Load a raster header and payload as a :class:`CovariateField`."""
    path = Path(path)
    try:
        header = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataFormatError(f"cannot read raster header: {exc.strerror or exc}", path) from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    try:
        window = Window(*header["window"])
        nx, ny = int(header["nx"]), int(header["ny"])
        registration = header.get("registration", "node")
        encoding = header.get("encoding", "csv")
        payload = path.parent / header["payload"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid raster header: {exc}", path) from None
    try:
        if encoding == "csv":
            rows = []
            with payload.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        vals = [float(v) for v in line.split(",")]
                    except ValueError:
                        raise DataFormatError("non-numeric value", payload, lineno) from None
                    if len(vals) != nx:
                        raise DataFormatError(
                            f"expected {nx} values, got {len(vals)}", payload, lineno
                        )
                    rows.append(vals)
            values = np.array(rows, dtype=float)
        elif encoding == "float64-le":
            values = np.fromfile(payload, dtype="<f8")
            if values.size != nx * ny:
                raise DataFormatError(f"expected {nx * ny} doubles, got {values.size}", payload)
            values = values.reshape(ny, nx)
        else:
            raise DataFormatError(f"unknown encoding {encoding!r}", path)
    except OSError as exc:
        raise DataFormatError(f"cannot read raster payload: {exc.strerror or exc}", payload) from None
    if values.shape != (ny, nx):
        raise DataFormatError(f"payload shape {values.shape} != ({ny}, {nx})", payload)
    try:
        return CovariateField(values, window, registration)
    except (FixppError, ValueError) as exc:
        raise DataFormatError(str(exc), path) from None


def raster_texts(field, payload_name, encoding="csv"):
    """``(header_text, payload bytes)`` for a field."""
    header = {
        "format": "fixpp-raster",
        "window": [float(v) for v in field.window.bounds],
        "nx": field.nx,
        "ny": field.ny,
        "registration": field.registration,
        "encoding": encoding,
        "payload": payload_name,
    }
    if encoding == "csv":
        body = "\n".join(",".join(format_float(v) for v in row) for row in field.values) + "\n"
        data = body.encode("utf-8")
    elif encoding == "float64-le":
        data = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    return json.dumps(header, indent=2) + "\n", data


def write_raster(path, field, encoding="csv"):
    """Write ``path`` (JSON header) and its payload next to it."""
    path = Path(path)
    suffix = ".csv" if encoding == "csv" else ".f64"
    payload = path.with_suffix(suffix).name
    header, data = raster_texts(field, payload, encoding)
    path.write_text(header, encoding="utf-8")
    (path.parent / payload).write_bytes(data)
