"""CSV ingestion and atomic artifact writers."""

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

from .errors import IngestionError
from .survival import SurvivalDataset


def fmt(x):
    """17 significant digits: lossless for IEEE doubles."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _parse_float(text, row, column):
    try:
        v = float(text)
    except ValueError:
        raise IngestionError(f"row {row}, column {column!r}: cannot parse {text!r}",
                             operation="load_dataset", row=row, column=column,
                             datum=text) from None
    if not math.isfinite(v):
        raise IngestionError(f"row {row}, column {column!r}: non-finite value {text!r}",
                             operation="load_dataset", row=row, column=column,
                             datum=text)
    return v


def read_survival_csv(path, transform="log", time_col="time", status_col="status"):
    """Parse a CSV with ``time``, ``status`` and covariate columns.

    Returns ``(dataset, covariate_names)``. Rows are numbered from 1 for the
    first data row after the header.
    """
    if not os.path.exists(path):
        raise IngestionError(f"no such file: {path}", operation="load_dataset",
                             datum=str(path))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError("empty file, header row missing",
                                 operation="load_dataset", datum=str(path)) from None
        for col in (time_col, status_col):
            if col not in header:
                raise IngestionError(f"missing column {col!r}", operation="load_dataset",
                                     column=col, datum=header)
        it, ist = header.index(time_col), header.index(status_col)
        cov_cols = [i for i in range(len(header)) if i not in (it, ist)]
        names = [header[i] for i in cov_cols]
        times, status, rows = [], [], []
        for r, line in enumerate(reader, start=1):
            if not line or all(not c.strip() for c in line):
                continue
            if len(line) != len(header):
                raise IngestionError(
                    f"row {r}: expected {len(header)} fields, found {len(line)}",
                    operation="load_dataset", row=r, datum=len(line))
            t = _parse_float(line[it], r, time_col)
            s = _parse_float(line[ist], r, status_col)
            if s not in (0.0, 1.0):
                raise IngestionError(f"row {r}: status must be 0 or 1, got {line[ist]!r}",
                                     operation="load_dataset", row=r,
                                     column=status_col, datum=line[ist])
            if transform == "log" and t <= 0:
                raise IngestionError(f"row {r}: time must be positive for the log "
                                     f"transform, got {line[it]!r}",
                                     operation="load_dataset", row=r,
                                     column=time_col, datum=line[it])
            times.append(t)
            status.append(int(s))
            rows.append([_parse_float(line[i], r, header[i]) for i in cov_cols])
    if not times:
        raise IngestionError("no data rows", operation="load_dataset", datum=str(path))
    x = np.array(rows, dtype=float).reshape(len(times), len(cov_cols))
    return SurvivalDataset(np.array(times), np.array(status), x, transform), names


def load_dataset(path, transform="log"):
    return read_survival_csv(path, transform)[0]


def read_covariates(path, names):
    """Covariate matrix from a CSV holding (at least) the named columns."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError("empty file, header row missing",
                                 operation="read_covariates", datum=str(path)) from None
        missing = [c for c in names if c not in header]
        if missing:
            raise IngestionError(f"missing covariate columns {missing[:5]}",
                                 operation="read_covariates", column=missing[0],
                                 datum=missing)
        idx = [header.index(c) for c in names]
        rows = []
        for r, line in enumerate(reader, start=1):
            if not line or all(not c.strip() for c in line):
                continue
            rows.append([_parse_float(line[i], r, header[i]) for i in idx])
    if not rows:
        raise IngestionError("no data rows", operation="read_covariates", datum=str(path))
    return np.array(rows, dtype=float)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer))
                    and not isinstance(v, bool) else v for v in row])
    return buf.getvalue()


def json_text(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_atomic(path, text):
    """Write via a temporary file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_artifacts(files):
    """Write ``{path: text}``; each file lands whole or not at all."""
    for path, text in files.items():
        write_atomic(path, text)


def dataset_csv(data, names=None):
    names = names or [f"x{j + 1}" for j in range(data.p)]
    rows = ([t, int(s), *xr] for t, s, xr in zip(data.y, data.delta, data.x))
    return csv_text(["time", "status", *names], rows)
