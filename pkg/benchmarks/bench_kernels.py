"""Wall-clock comparison of the numba kernels against the plain-numpy fallback.

Each path runs in its own interpreter because the kernel choice is made at
import time from ``GRADEDMECH_DISABLE_NUMBA``. Compilation is excluded by a
warm-up call before timing.

    python3 benchmarks/bench_kernels.py --steps 100000 --repeat 3
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
from gradedmech import _kernels
from gradedmech.bench import DEFAULT_INITIAL, SleighParams, sleigh_reference
from gradedmech.integrators import CanonicalHamiltonian, State, simulate

steps, repeat = int(sys.argv[1]), int(sys.argv[2])
h = 1e-3
pend = CanonicalHamiltonian("1/2*p1^2 + 1 - cos(q1)", 1)
s0 = State(0.0, [1.0], [0.0])
cases = {
    "verlet": lambda n: simulate(pend, "verlet", s0, h, n * h, stride=100),
    "symplectic_euler": lambda n: simulate(pend, "symplectic_euler", s0, h, n * h, stride=100),
    "sleigh_rk4": lambda n: sleigh_reference(SleighParams(), DEFAULT_INITIAL, h, n * h, stride=100),
}
out = {"numba": _kernels.NUMBA_ENABLED}
for name, fn in cases.items():
    fn(10)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(steps)
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def run(disabled: bool, steps: int, repeat: int) -> dict:
    env = dict(os.environ, GRADEDMECH_DISABLE_NUMBA="1" if disabled else "0")
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(steps), str(repeat)], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(proc.stdout)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    fast = run(False, args.steps, args.repeat)
    slow = run(True, args.steps, args.repeat)
    if not fast.pop("numba"):
        print("numba is not importable; both columns use the fallback", file=sys.stderr)
    slow.pop("numba")
    print(f"{'case':<18} {'numba [s]':>12} {'numpy [s]':>12} {'speed-up':>10}   ({args.steps} steps)")
    for name in fast:
        print(f"{name:<18} {fast[name]:>12.4f} {slow[name]:>12.4f} {slow[name] / fast[name]:>9.1f}x")


if __name__ == "__main__":
    main()
