"""CSV ingestion and deterministic file output.

All writers go through a temp-file-then-rename step so a crashed run
never leaves a half-written artifact, and all numbers are formatted
with 17 significant digits and a '.' decimal separator so seeded reruns
are byte-identical regardless of locale.
"""

import csv
import json
import os
import tempfile

import numpy as np

from .errors import DataError
from .estimator import Dataset


def format_number(value) -> str:
    """Locale-independent float-to-text with 17 significant digits."""
    return "%.17g" % float(value)


def csv_header(path) -> list:
    """Column names from the first line of a CSV file."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            row = next(csv.reader(handle), None)
    except OSError as exc:
        raise DataError("cannot open %s: %s" % (path, exc)) from exc
    if row is None:
        raise DataError("%s is empty (no header row)" % path)
    return [name.strip() for name in row]


def read_dataset(path, x_columns, y_column) -> Dataset:
    """Load a headered CSV into a Dataset.

    Covariate and response columns are located by name; with no covariate
    names given, every header column except the response is used, in
    header order.  Every parsing problem is reported with its line number
    so large files can be fixed without guesswork.
    """
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError("cannot open %s: %s" % (path, exc)) from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("%s is empty (no header row)" % path) from None
        header = [name.strip() for name in header]
        if not x_columns:
            x_columns = [name for name in header if name != y_column]
            if not x_columns:
                raise DataError("%s has no covariate columns besides %r" % (path, y_column))
        indices = []
        for name in list(x_columns) + [y_column]:
            if name not in header:
                raise DataError(
                    "column %r not found in header of %s (header: %s)"
                    % (name, path, ", ".join(header))
                )
            indices.append(header.index(name))

        xs = []
        ys = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    "%s line %d: expected %d columns, found %d"
                    % (path, lineno, len(header), len(row))
                )
            values = []
            for idx in indices:
                cell = row[idx].strip()
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        "%s line %d, column %r: could not parse %r as a number"
                        % (path, lineno, header[idx], cell)
                    ) from None
            xs.append(values[:-1])
            ys.append(values[-1])

    if not xs:
        raise DataError("%s contains a header but no data rows" % path)
    try:
        return Dataset(x=np.asarray(xs, dtype=float), y=np.asarray(ys, dtype=float))
    except ValueError as exc:
        raise DataError("%s: %s" % (path, exc)) from exc


def _atomic_write(path, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    """Write a strictly formatted CSV atomically.

    Row cells that are not already strings are run through
    ``format_number``.
    """
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(cell if isinstance(cell, str) else format_number(cell) for cell in row)
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def write_text(path, text: str):
    _atomic_write(path, text)


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def write_metadata(path, payload: dict):
    """Serialize run metadata as stable JSON (sorted keys, fixed layout)."""
    text = json.dumps(_json_ready(payload), sort_keys=True, indent=2)
    _atomic_write(path, text + "\n")
