"""CSV emission and parsing for trajectories and error tables.

Numbers are written with 17 significant digits (``format(x, ".17g")``), which
round-trips every double; missing values are empty cells. Lines end in
``\\n`` regardless of platform.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import IO

import numpy as np

from .bench import ErrorTable
from .integrators import TrajectoryRecord

__all__ = ["format_number", "record_to_csv", "record_from_csv", "table_to_csv", "table_from_csv", "emit_csv"]


def format_number(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def _parse_number(cell: str) -> float:
    return float(cell) if cell.strip() else math.nan


def _write_rows(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def record_to_csv(rec: TrajectoryRecord) -> str:
    rows = [rec.columns()]
    N = len(rec)
    empty = [None] * N
    cres = rec.constraint_residual if rec.constraint_residual is not None else empty
    power = rec.power_residual if rec.power_residual is not None else empty
    for k in range(N):
        vals = [rec.t[k], *rec.q[k]]
        if rec.p is not None:
            vals.extend(rec.p[k])
        vals.extend([rec.energy[k], cres[k], power[k]])
        rows.append([format_number(v) for v in vals])
    return _write_rows(rows)


def record_from_csv(text: str) -> TrajectoryRecord:
    """Inverse of :func:`record_to_csv`; the record kind is read off the header."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    body = [[_parse_number(c) for c in row] for row in reader if row]
    if header[:1] != ["t"] or header[-3:] != ["energy", "constraint_residual", "power_residual"]:
        raise ValueError("not a trajectory CSV header")
    state = header[1:-3]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    if state and state[0].startswith("x"):
        kind, n, second = "port", len(state), None
    else:
        n = len(state) // 2
        second = state[n][0] if n else "p"
        kind = "hamiltonian" if second == "p" else "lagrangian"
    t = data[:, 0]
    q = data[:, 1 : 1 + n]
    p = None if second is None else data[:, 1 + n : 1 + 2 * n]
    energy, cres, power = data[:, -3], data[:, -2], data[:, -1]
    return TrajectoryRecord(
        kind,
        t,
        q,
        p,
        energy,
        None if np.all(np.isnan(cres)) else cres,
        None if np.all(np.isnan(power)) else power,
    )


def table_to_csv(table: ErrorTable) -> str:
    rows = [["method", *table.columns]]
    rows += [[name, *(format_number(v) for v in vals)] for name, vals in table.rows.items()]
    return _write_rows(rows)


def table_from_csv(text: str) -> ErrorTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header[:1] != ["method"]:
        raise ValueError("not an error-table CSV header")
    rows = {row[0]: tuple(_parse_number(c) for c in row[1:]) for row in reader if row}
    return ErrorTable(tuple(header[1:]), rows)


def emit_csv(obj: TrajectoryRecord | ErrorTable, dest: str | Path | IO[str]) -> None:
    """Write a record or table to a path or an open text stream."""
    text = table_to_csv(obj) if isinstance(obj, ErrorTable) else record_to_csv(obj)
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text, newline="")
