import io
import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from gradedmech.bench import ErrorTable, sleigh_system, DEFAULT_INITIAL
from gradedmech.csvio import emit_csv, format_number, record_from_csv, record_to_csv, table_from_csv, table_to_csv
from gradedmech.integrators import CanonicalHamiltonian, PortHamiltonian, State, simulate

OSC = CanonicalHamiltonian("1/2*p1^2 + 1/2*q1^2", 1)


def _same(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b, equal_nan=True)


def assert_round_trip(rec):
    back = record_from_csv(record_to_csv(rec))
    assert back.kind == rec.kind
    for field in ("t", "q", "p", "energy", "constraint_residual", "power_residual"):
        assert _same(getattr(back, field), getattr(rec, field)), field


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_number_format_round_trips(x):
    assert float(format_number(x)) == x


def test_missing_values_are_empty():
    assert format_number(None) == "" and format_number(math.nan) == ""


def test_round_trip_all_kinds():
    assert_round_trip(simulate(OSC, "symplectic_euler", State(0, [1.0], [0.0]), 0.1, 3.0))
    assert_round_trip(simulate(sleigh_system(), "dirac1", DEFAULT_INITIAL, 0.01, 0.3))
    port = PortHamiltonian("1/2*x1^2 + 1/2*x2^2", 2, J={(1, 2): 1}, R={(2, 2): "1/3"}, g={(2, 1): 1}, f=["cos(t)"])
    assert_round_trip(simulate(port, "midpoint", State(0, [1.0, 0.0]), 0.1, 1.0))


def test_empty_trajectory_has_one_row():
    text = record_to_csv(simulate(OSC, "verlet", State(0, [1.0], [0.0]), 0.1, 0.0))
    assert text.splitlines() == ["t,q1,p1,energy,constraint_residual,power_residual", "0,1,0,0.5,,"]
    assert text.endswith("\n")


def test_table_lines_and_round_trip():
    table = ErrorTable(("a", "b"), {"x": (1.0, 0.1), "y": (2.5e-17, 3.0), "z": (0.0, 1 / 3)})
    text = table_to_csv(table)
    assert len(text.splitlines()) == 4 and text.endswith("\n")
    assert table_from_csv(text) == table


def test_emit_to_stream_and_path(tmp_path):
    table = ErrorTable(("a",), {"x": (1.0,)})
    buf = io.StringIO()
    emit_csv(table, buf)
    emit_csv(table, tmp_path / "t.csv")
    assert buf.getvalue() == (tmp_path / "t.csv").read_bytes().decode() == "method,a\nx,1\n"
