"""Serialization of traces, learned profiles, metrics and comparison tables.

CSV floats are written with 17 significant digits, which round-trips every
float64 exactly, so re-reading a trace reproduces it bit for bit.
"""

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Dict, Iterable, Mapping, Sequence

import numpy as np

from .metrics import AXES, ConvergenceReport, MetricsRecord

TRACE_HEADER = ("t", "y1", "y2", "yy", "r1", "r2", "ry", "e1", "e2", "ey",
                "s1", "s2", "sy", "G1", "G2", "Gy", "u1", "u2", "uy", "ec")
PROFILE_HEADER = ("t", "w_1", "w_2", "w_y")
CONVERGENCE_HEADER = ("iteration", "rmse", "rmssv_1", "rmssv_2", "rmssv_y")
FLOAT_FMT = "%.17g"
AXIS_LABELS = {"x1": "x_1", "x2": "x_2", "xy": "x_y"}


class TraceFormatError(ValueError):
    pass


def _write_matrix(path, header: Sequence[str], cols: np.ndarray):
    path = Path(path)
    buf = io.StringIO()
    np.savetxt(buf, cols, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")
    try:
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    return path


def emit_trace(trace, path, format: str = "csv") -> Path:
    if format != "csv":
        raise ValueError(f"unsupported trace format {format!r}")
    cols = np.column_stack([trace.t, trace.y, trace.r, trace.e, trace.s, trace.Gamma,
                            trace.u, trace.e_c])
    return _write_matrix(path, TRACE_HEADER, cols)


def _read_matrix(path, header: Sequence[str]) -> np.ndarray:
    path = Path(path)
    try:
        with path.open() as fh:
            first = fh.readline().strip()
            if tuple(first.split(",")) != tuple(header):
                raise TraceFormatError(f"{path}: unexpected header {first!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read {path}: {exc.strerror}") from exc
    if data.size == 0:
        data = np.zeros((0, len(header)))
    if data.shape[1] != len(header):
        raise TraceFormatError(f"{path}: expected {len(header)} columns, got {data.shape[1]}")
    return data


def read_trace(path, meta=None):
    from .sim import IterationTrace

    d = _read_matrix(path, TRACE_HEADER)
    return IterationTrace(t=d[:, 0].copy(), y=d[:, 1:4].copy(), r=d[:, 4:7].copy(),
                          e=d[:, 7:10].copy(), s=d[:, 10:13].copy(), Gamma=d[:, 13:16].copy(),
                          u=d[:, 16:19].copy(), e_c=d[:, 19].copy(), meta=dict(meta or {}))


def emit_profile(t, w, path) -> Path:
    return _write_matrix(path, PROFILE_HEADER, np.column_stack([t, w]))


def read_profile(path):
    d = _read_matrix(path, PROFILE_HEADER)
    return d[:, 0].copy(), d[:, 1:4].copy()


def write_json(obj, path) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    return path


def emit_metrics(record: MetricsRecord, path) -> Path:
    return write_json(record.to_dict(), path)


def read_metrics(path) -> MetricsRecord:
    return MetricsRecord.from_dict(json.loads(Path(path).read_text()))


def emit_convergence(report: ConvergenceReport, path) -> Path:
    rows = np.column_stack([report.iterations, report.contour_rmse,
                            report.rmssv["x1"], report.rmssv["x2"], report.rmssv["xy"]])
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONVERGENCE_HEADER)
    for r in rows:
        w.writerow([str(int(r[0]))] + [FLOAT_FMT % v for v in r[1:]])
    path.write_text(buf.getvalue())
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# Comparison tables: rows are carriages, columns are task x controller cells.

INDEXES = ("rmse", "maxae", "rmssv", "maxasv")
INDEX_TITLES = {"rmse": "RMSE (um)", "maxae": "MaxAE (um)",
                "rmssv": "RMSSV (x1e-4)", "maxasv": "MaxASV (x1e-4)"}
TASK_LABELS = {"circle_t1": "T1", "cardioid_t2": "T2", "custom": "TC"}


def _cell_label(task, variant):
    return f"{TASK_LABELS.get(task, task)}-{variant}"


def table_from_cells(cells: Mapping[tuple, Mapping[str, float]]) -> Dict[str, Dict[str, float]]:
    """``{(task, variant): {axis: value}}`` -> ``{row_label: {cell_label: value}}``."""
    out = {AXIS_LABELS[a]: {} for a in AXES}
    order = list(TASK_LABELS)

    def rank(item):
        task, variant = item[0]
        return (order.index(task) if task in order else len(order), task, variant)

    for (task, variant), vals in sorted(cells.items(), key=rank):
        for a in AXES:
            out[AXIS_LABELS[a]][_cell_label(task, variant)] = float(vals[a])
    return out


def table_from_records(records: Iterable[MetricsRecord], index: str) -> Dict[str, Dict[str, float]]:
    return table_from_cells({(r.task, r.variant): getattr(r, index) for r in records})


def render_table(table: Mapping[str, Mapping[str, float]], title: str = "", digits: int = 2) -> str:
    cols = list(next(iter(table.values())).keys())
    width = max(8, *(len(c) for c in cols))
    lines = []
    if title:
        lines.append(title)
    lines.append("".ljust(6) + "".join(c.rjust(width + 2) for c in cols))
    for row, vals in table.items():
        lines.append(row.ljust(6) + "".join(f"{vals[c]:.{digits}f}".rjust(width + 2) for c in cols))
    return "\n".join(lines)


def table_csv(table: Mapping[str, Mapping[str, float]]) -> str:
    cols = list(next(iter(table.values())).keys())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["carriage"] + cols)
    for row, vals in table.items():
        w.writerow([row] + [FLOAT_FMT % vals[c] for c in cols])
    return buf.getvalue()


def write_text(text: str, path) -> Path:
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    return path
