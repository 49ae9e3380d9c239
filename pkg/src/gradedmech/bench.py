"""Chaplygin sleigh benchmark and oscillator energy-drift study.

The sleigh reference solution integrates the reduced equations for the
signed forward speed ``v`` and the turning rate ``omega`` with classical
RK4. Those equations are derived here with sympy from the constrained
Euler-Lagrange system, so the reference shares neither algebra nor stepping
code with :func:`gradedmech.integrators.step_dirac1`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np
import sympy as sp

from . import _kernels
from .expr import parse_expr
from .integrators import (
    CanonicalHamiltonian,
    ConstrainedLagrangian,
    State,
    TrajectoryRecord,
    _num_steps,
    simulate,
)

__all__ = [
    "SleighParams",
    "ErrorTable",
    "DEFAULT_PARAMS",
    "DEFAULT_INITIAL",
    "sleigh_system",
    "sleigh_reference",
    "reduced_sleigh_equations",
    "run_sleigh_benchmark",
    "oscillator_drift_study",
    "SLEIGH_METHODS",
    "OSCILLATOR_METHODS",
]

SLEIGH_METHODS = ("explicit_euler", "symplectic_euler", "dirac1")
OSCILLATOR_METHODS = ("explicit_euler", "symplectic_euler", "verlet")
SLEIGH_COLUMNS = ("error_x", "error_y", "error_theta", "constraint_residual", "energy_deviation")
OSCILLATOR_COLUMNS = ("max_energy_drift", "final_energy_drift", "early_energy_drift")


@dataclass(frozen=True)
class SleighParams:
    """Mass ``m``, contact-to-centre distance ``a`` and inertia ``I``."""

    m: float = 1.0
    a: float = 0.1
    I: float = 1.0

    def __post_init__(self):
        if not (self.m > 0 and self.I > 0 and self.a >= 0):
            raise ValueError(f"need m > 0, I > 0, a >= 0; got {self}")
        if not all(math.isfinite(x) for x in (self.m, self.a, self.I)):
            raise ValueError("sleigh parameters must be finite")


DEFAULT_PARAMS = SleighParams()
# (x, y, theta) = 0 and (vx, vy, omega) = (1, 0, 1)
DEFAULT_INITIAL = State(0.0, [0.0, 0.0, 0.0], [1.0, 0.0, 1.0])


@dataclass(frozen=True)
class ErrorTable:
    """Rows of named numbers, kept in insertion order."""

    columns: tuple[str, ...]
    rows: Mapping[str, tuple[float, ...]]

    def __post_init__(self):
        for name, vals in self.rows.items():
            if len(vals) != len(self.columns):
                raise ValueError(f"row {name!r} has {len(vals)} entries, expected {len(self.columns)}")

    def __getitem__(self, method: str) -> dict[str, float]:
        return dict(zip(self.columns, self.rows[method]))

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def methods(self) -> tuple[str, ...]:
        return tuple(self.rows)

    def __str__(self) -> str:
        width = max([len("method")] + [len(m) for m in self.rows])
        lines = ["method".ljust(width) + "".join(f"  {c:>20}" for c in self.columns)]
        for name, vals in self.rows.items():
            lines.append(name.ljust(width) + "".join(f"  {v:>20.6e}" for v in vals))
        return "\n".join(lines)


def _num(x: float) -> str:
    # exact decimal of the double so the parser sees the same value
    return f"({sp.Rational(x)})" if x != int(x) else str(int(x))


def sleigh_system(p: SleighParams = DEFAULT_PARAMS) -> ConstrainedLagrangian:
    """``L = m/2 (vx^2 + vy^2 + (I/m + a^2) w^2 - 2a sin(th) vx w + 2a cos(th) vy w)``
    with the no-side-slip constraint ``sin(th) dx - cos(th) dy``."""
    m, a, I = _num(p.m), _num(p.a), _num(p.I)
    L = (
        f"{m}/2*(v1^2 + v2^2 + ({I}/{m} + {a}^2)*v3^2"
        f" - 2*{a}*sin(q3)*v1*v3 + 2*{a}*cos(q3)*v2*v3)"
    )
    return ConstrainedLagrangian(parse_expr(L), 3, ["sin(q3)*dq1 - cos(q3)*dq2"])


@lru_cache(maxsize=None)
def reduced_sleigh_equations() -> tuple[sp.Expr, sp.Expr]:
    """``(dv/dt, domega/dt)`` in the symbols ``v, w, m, a, I``.

    Eliminates the multiplier from the constrained Euler-Lagrange equations
    and the differentiated constraint, then substitutes
    ``(vx, vy) = v (cos th, sin th)``.
    """
    m, a, I = sp.symbols("m a I", positive=True)
    th, vx, vy, w = sp.symbols("th vx vy w", real=True)
    ax, ay, aw, lam = sp.symbols("ax ay aw lam")
    t = sp.Symbol("t")
    X, Y, TH = (sp.Function(n)(t) for n in ("X", "Y", "TH"))
    L = m / 2 * (
        X.diff(t) ** 2 + Y.diff(t) ** 2 + (I / m + a**2) * TH.diff(t) ** 2
        - 2 * a * sp.sin(TH) * X.diff(t) * TH.diff(t)
        + 2 * a * sp.cos(TH) * Y.diff(t) * TH.diff(t)
    )
    coeffs = {X: sp.sin(TH), Y: -sp.cos(TH), TH: sp.Integer(0)}
    to_plain = [
        (X.diff(t, 2), ax), (Y.diff(t, 2), ay), (TH.diff(t, 2), aw),
        (X.diff(t), vx), (Y.diff(t), vy), (TH.diff(t), w), (TH, th),
    ]
    eqs = []
    for Q in (X, Y, TH):
        el = sp.diff(L.diff(Q.diff(t)), t) - L.diff(Q) - lam * coeffs[Q]
        eqs.append(el.subs(to_plain))
    constraint = sp.sin(TH) * X.diff(t) - sp.cos(TH) * Y.diff(t)
    eqs.append(sp.diff(constraint, t).subs(to_plain))
    sol = sp.solve(eqs, [ax, ay, aw, lam], dict=True)[0]
    v = sp.Symbol("v", real=True)
    heading = {vx: v * sp.cos(th), vy: v * sp.sin(th)}
    # v = vx cos th + vy sin th, so dv/dt = ax cos th + ay sin th + w (vy cos th - vx sin th)
    dv = sol[ax] * sp.cos(th) + sol[ay] * sp.sin(th) + w * (vy * sp.cos(th) - vx * sp.sin(th))
    dv = sp.simplify(dv.subs(heading))
    dw = sp.simplify(sol[aw].subs(heading))
    return dv, dw


@lru_cache(maxsize=None)
def _reference_rhs(params: SleighParams):
    dv, dw = reduced_sleigh_equations()
    src = (
        "def sleigh_rhs(t, y):\n"
        "    th = y[2]\n"
        "    v = y[3]\n"
        "    w = y[4]\n"
        "    out = np.empty(5)\n"
        "    out[0] = v*math.cos(th)\n"
        "    out[1] = v*math.sin(th)\n"
        "    out[2] = w\n"
        f"    out[3] = {sp.pycode(dv)}\n"
        f"    out[4] = {sp.pycode(dw)}\n"
        "    return out\n"
    )
    ns = {"math": math, "np": np, "m": params.m, "a": params.a, "I": params.I}
    exec(compile(src, "<sleigh reference>", "exec"), ns)
    return _kernels.jit(ns["sleigh_rhs"])


def sleigh_reference(
    p: SleighParams, s0: State, h_ref: float, T: float, stride: int = 1
) -> TrajectoryRecord:
    """RK4 on ``(x, y, theta, v, omega)`` with the reduced equations.

    The energy column is ``m v^2 / 2 + (I + m a^2) omega^2 / 2`` and the
    constraint column is ``|vx sin th - vy cos th|`` of the reconstructed
    velocities.
    """
    x0, y0, th0 = (float(c) for c in s0.q)
    vx0, vy0, w0 = (float(c) for c in s0.v)
    slip = vx0 * math.sin(th0) - vy0 * math.cos(th0)
    if abs(slip) > 1e-12 * (1.0 + abs(vx0) + abs(vy0)):
        raise ValueError(f"initial velocity violates the constraint (residual {slip:.3e})")
    v0 = vx0 * math.cos(th0) + vy0 * math.sin(th0)
    nsteps = _num_steps(T, h_ref)
    if nsteps and stride < 1:
        raise ValueError("stride must be at least 1")
    ts, ys = _kernels.rk4_fixed(
        _reference_rhs(p), np.array([x0, y0, th0, v0, w0]), float(s0.t), float(h_ref), nsteps, stride
    )
    th, v, w = ys[:, 2], ys[:, 3], ys[:, 4]
    vel = np.column_stack([v * np.cos(th), v * np.sin(th), w])
    energy = 0.5 * p.m * v**2 + 0.5 * (p.I + p.m * p.a**2) * w**2
    cres = np.abs(vel[:, 0] * np.sin(th) - vel[:, 1] * np.cos(th))
    return TrajectoryRecord("lagrangian", ts, ys[:, :3].copy(), vel, energy, cres, method="reference_rk4")


def run_sleigh_benchmark(
    p: SleighParams = DEFAULT_PARAMS,
    s0: State = DEFAULT_INITIAL,
    h: float = 1e-3,
    T: float = 10.0,
    records: dict | None = None,
) -> ErrorTable:
    """Endpoint errors against ``sleigh_reference`` at ``h_ref = h/100``.

    Columns: ``|x - x_ref|``, ``|y - y_ref|``, ``|theta - theta_ref|`` at
    ``t = T``, max constraint residual and max ``|E_k - E_0|`` over the run.
    If ``records`` is a dict it receives each method's trajectory and the
    reference under ``"reference"``.
    """
    sys = sleigh_system(p)
    ref = sleigh_reference(p, s0, h / 100, T, stride=100)
    end = ref.q[-1]
    rows = {}
    for method in SLEIGH_METHODS:
        rec = simulate(sys, method, s0, h, T)
        if abs(rec.t[-1] - ref.t[-1]) > 1e-9 * max(1.0, abs(T)):
            raise RuntimeError("reference and method end at different times")
        err = np.abs(rec.q[-1] - end)
        rows[method] = (
            float(err[0]),
            float(err[1]),
            float(err[2]),
            float(np.max(rec.constraint_residual)),
            float(np.max(np.abs(rec.energy - rec.energy[0]))),
        )
        if records is not None:
            records[method] = rec
    if records is not None:
        records["reference"] = ref
    return ErrorTable(SLEIGH_COLUMNS, rows)


def oscillator_drift_study(h: float = 0.01, T: float = 1000.0, records: dict | None = None) -> ErrorTable:
    """Energy drift of the three canonical methods on ``H = (p^2 + q^2)/2``.

    Columns: max ``|H_k - H_0|``, final ``|H_N - H_0|`` and the max over the
    first 100 steps. Starts at ``(q, p) = (1, 0)``.
    """
    if not (h > 0 and math.isfinite(h)):
        raise ValueError(f"step size must be positive, got {h}")
    sys = CanonicalHamiltonian("1/2*p1^2 + 1/2*q1^2", 1)
    s0 = State(0.0, [1.0], [0.0])
    rows = {}
    for method in OSCILLATOR_METHODS:
        rec = simulate(sys, method, s0, h, T)
        drift = np.abs(rec.energy - rec.energy[0])
        rows[method] = (float(np.max(drift)), float(drift[-1]), float(np.max(drift[:101])))
        if records is not None:
            records[method] = rec
    return ErrorTable(OSCILLATOR_COLUMNS, rows)
