import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from gradedmech import _kernels

SCRIPT = """
import json
from gradedmech import _kernels
from gradedmech.bench import SleighParams, DEFAULT_INITIAL, sleigh_reference
from gradedmech.integrators import CanonicalHamiltonian, State, simulate
sys_ = CanonicalHamiltonian("1/2*p1^2 + 1/2*p2^2 + 1 - cos(q1) + 1/4*q2^4", 2)
out = {"numba": _kernels.NUMBA_ENABLED}
for m in ("explicit_euler", "symplectic_euler", "verlet"):
    rec = simulate(sys_, m, State(0, [0.5, -1.0], [0.0, 0.3]), 0.01, 5.0, stride=7)
    out[m] = [rec.q.tolist(), rec.p.tolist()]
ref = sleigh_reference(SleighParams(), DEFAULT_INITIAL, 0.01, 3.0)
out["reference"] = ref.q.tolist()
print(json.dumps(out))
"""


def run_with_flag(value):
    env = dict(os.environ)
    env["GRADEDMECH_DISABLE_NUMBA"] = value
    proc = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


@pytest.mark.skipif(not _kernels.NUMBA_ENABLED, reason="numba unavailable")
def test_compiled_and_fallback_paths_agree():
    fast = run_with_flag("0")
    slow = run_with_flag("1")
    assert fast.pop("numba") is True and slow.pop("numba") is False
    for key in fast:
        np.testing.assert_allclose(np.array(fast[key], dtype=float), np.array(slow[key], dtype=float), rtol=1e-12, atol=1e-13)


def test_fallback_rk4_matches_closed_form():
    def rhs(t, y):
        return -y

    ts, ys = _kernels.rk4_fixed_py(rhs, np.array([1.0]), 0.0, 0.01, 100, 10)
    assert len(ts) == 11 and ys.shape == (11, 1)
    assert ys[-1, 0] == pytest.approx(math.exp(-1.0), rel=1e-9)


@pytest.mark.parametrize("value, disabled", [("", False), ("0", False), ("false", False), ("1", True), ("yes", True)])
def test_flag_parsing(monkeypatch, value, disabled):
    monkeypatch.setenv("GRADEDMECH_DISABLE_NUMBA", value)
    assert _kernels._flag_disabled() is disabled
