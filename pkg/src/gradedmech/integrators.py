"""Fixed-step integrators with structure diagnostics.

Three kinds of system are supported:

* :class:`CanonicalHamiltonian` -- ``H(q, p)``, stepped by explicit Euler,
  symplectic Euler or Stoermer-Verlet;
* :class:`ConstrainedLagrangian` -- ``L(q, v)`` with velocity constraints
  ``A(q) v = 0`` given as one-forms, stepped by the first-order
  Lagrange-Dirac scheme :func:`step_dirac1` (or by Euler methods with the
  continuous constraint multiplier, as naive baselines);
* :class:`PortHamiltonian` -- ``x' = (J - R) grad H + g f(t)``, stepped by the
  implicit midpoint rule.

Implicit steps are solved by a damped Newton iteration with symbolic
Jacobians. Separable Hamiltonian runs go through the compiled kernels in
:mod:`gradedmech._kernels`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels
from ._parse import ParseError
from .expr import (
    Const,
    Expr,
    Var,
    as_expr,
    compile_matrix,
    compile_scalar,
    compile_vector,
    jacobian,
    parse_expr,
)

logger = logging.getLogger(__name__)

__all__ = [
    "State",
    "TrajectoryRecord",
    "CanonicalHamiltonian",
    "ConstrainedLagrangian",
    "PortHamiltonian",
    "ConvergenceError",
    "StepError",
    "newton",
    "step_explicit_euler",
    "step_symplectic_euler",
    "step_verlet",
    "step_dirac1",
    "step_port_hamiltonian",
    "simulate",
    "power_balance_residual",
    "METHODS",
    "parse_system",
    "load_system",
]

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
NEWTON_MAX_HALVINGS = 8


class ConvergenceError(RuntimeError):
    """Newton iteration failed to reach the residual tolerance."""


class StepError(RuntimeError):
    """A step failed during :func:`simulate`; ``step`` is the failing index."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step


@dataclass(eq=False)
class State:
    """Time, positions, second slot and multipliers.

    The second slot ``p`` holds momenta for Hamiltonian systems and
    velocities for Lagrangian ones (also reachable as ``v``); it is ``None``
    for port-Hamiltonian systems, whose whole state lives in ``q``.
    """

    t: float
    q: np.ndarray
    p: np.ndarray | None = None
    lam: np.ndarray | None = None

    def __post_init__(self):
        self.t = float(self.t)
        self.q = np.asarray(self.q, dtype=float)
        if self.p is not None:
            self.p = np.asarray(self.p, dtype=float)
        if self.lam is not None:
            self.lam = np.asarray(self.lam, dtype=float)

    @property
    def v(self):
        return self.p

    def is_finite(self) -> bool:
        parts = [self.q] + [a for a in (self.p, self.lam) if a is not None]
        return math.isfinite(self.t) and all(np.all(np.isfinite(a)) for a in parts)


def newton(
    residual: Callable,
    jac: Callable,
    z0: np.ndarray,
    args: tuple = (),
    *,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    max_halvings: int = NEWTON_MAX_HALVINGS,
) -> np.ndarray:
    """Damped Newton for ``residual(z, *args) = 0`` in the max norm.

    A full step is tried first and halved (at most ``max_halvings`` times)
    while it fails to reduce the residual. If the update has shrunk to
    rounding level the iteration stops and accepts a residual up to
    ``100 * tol``.
    """
    z = np.array(z0, dtype=float)
    r = residual(z, *args)
    nr = float(np.max(np.abs(r))) if r.size else 0.0
    for _ in range(max_iter):
        if nr <= tol:
            return z
        J = jac(z, *args)
        try:
            dz = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Jacobian ({exc})") from None
        step = 1.0
        for _ in range(max_halvings + 1):
            zt = z + step * dz
            rt = residual(zt, *args)
            nt = float(np.max(np.abs(rt)))
            if nt < nr:
                break
            step *= 0.5
        update = float(np.max(np.abs(zt - z)))
        z, r, nr = zt, rt, nt if math.isfinite(nt) else math.inf
        if nr <= tol:
            return z
        if update <= 1e-15 * (1.0 + float(np.max(np.abs(z)))):
            if nr <= 100 * tol:
                return z
            break
    raise ConvergenceError(f"Newton did not converge (residual {nr:.3e})")


def _names(prefix: str, n: int, given: Sequence[str] | None) -> tuple[str, ...]:
    if given is None:
        return tuple(f"{prefix}{i}" for i in range(1, n + 1))
    given = tuple(given)
    if len(given) != n:
        raise ValueError(f"expected {n} names, got {len(given)}")
    return given


def _expr(e, allowed) -> Expr:
    if isinstance(e, str):
        return parse_expr(e, allowed)
    e = as_expr(e)
    extra = e.free_vars() - set(allowed)
    if extra:
        raise ValueError(f"expression uses unknown variables {sorted(extra)}")
    return e


def _eval_samples(fn: Callable, n: int, *arrays) -> np.ndarray:
    val = np.asarray(fn(*arrays), dtype=float)
    return np.broadcast_to(val, (n,)).copy()


_KERNEL_GRADIENTS: dict[tuple, tuple[Callable, Callable]] = {}


class CanonicalHamiltonian:
    """``q' = dH/dp``, ``p' = -dH/dq`` for ``H`` an expression in ``q1..qn, p1..pn``."""

    kind = "hamiltonian"

    def __init__(self, H, n: int, q_names: Sequence[str] | None = None, p_names: Sequence[str] | None = None):
        self.n = int(n)
        self.q_names = _names("q", self.n, q_names)
        self.p_names = _names("p", self.n, p_names)
        self.H = _expr(H, self.q_names + self.p_names)
        self.dH_dq_exprs = [self.H.diff(v) for v in self.q_names]
        self.dH_dp_exprs = [self.H.diff(v) for v in self.p_names]

    def __repr__(self):
        return f"CanonicalHamiltonian(n={self.n}, H={self.H})"

    @property
    def _layout(self):
        return [("q", self.q_names), ("p", self.p_names)]

    @cached_property
    def separable(self) -> bool:
        qs, ps = set(self.q_names), set(self.p_names)
        return all(e.free_vars() <= qs for e in self.dH_dq_exprs) and all(
            e.free_vars() <= ps for e in self.dH_dp_exprs
        )

    @cached_property
    def hamiltonian(self) -> Callable:
        return compile_scalar(self.H, self._layout, name="H")

    @cached_property
    def hamiltonian_samples(self) -> Callable:
        return compile_scalar(self.H, self._layout, vectorized=True, name="H_samples")

    @cached_property
    def dH_dq(self) -> Callable:
        return compile_vector(self.dH_dq_exprs, self._layout, name="dH_dq")

    @cached_property
    def dH_dp(self) -> Callable:
        return compile_vector(self.dH_dp_exprs, self._layout, name="dH_dp")

    @cached_property
    def d2H_dqdp(self) -> Callable:
        return compile_matrix(jacobian(self.dH_dq_exprs, self.p_names), self._layout, name="d2H_dqdp")

    @cached_property
    def kernel_gradients(self) -> tuple[Callable, Callable]:
        """``(T'(p), V'(q))`` compiled for the separable kernel."""
        if not self.separable:
            raise ValueError("Hamiltonian is not separable")
        # keyed by source so equal Hamiltonians share one numba specialization
        key = (str(self.H), self.q_names, self.p_names)
        if key not in _KERNEL_GRADIENTS:
            gt = compile_vector(self.dH_dp_exprs, [("p", self.p_names)], name="grad_t")
            gv = compile_vector(self.dH_dq_exprs, [("q", self.q_names)], name="grad_v")
            _KERNEL_GRADIENTS[key] = (_kernels.jit(gt), _kernels.jit(gv))
        return _KERNEL_GRADIENTS[key]

    def energy(self, s: State) -> float:
        return float(self.hamiltonian(s.q, s.p))


class ConstrainedLagrangian:
    """``L(q, v)`` with linear velocity constraints ``sum_i A_ai(q) v_i = 0``.

    ``constraints`` is a sequence of one-forms, each given either as ``n``
    coefficient expressions in ``q`` or as a string such as
    ``"sin(q3)*dq1 - cos(q3)*dq2"`` written in the differentials ``dq_i``.
    """

    kind = "lagrangian"

    def __init__(
        self,
        L,
        n: int,
        constraints: Sequence = (),
        q_names: Sequence[str] | None = None,
        v_names: Sequence[str] | None = None,
    ):
        self.n = int(n)
        self.q_names = _names("q", self.n, q_names)
        self.v_names = _names("v", self.n, v_names)
        self.L = _expr(L, self.q_names + self.v_names)
        self.A_exprs = [self._one_form(c) for c in constraints]
        self.m = len(self.A_exprs)
        self.dL_dq_exprs = [self.L.diff(v) for v in self.q_names]
        self.dL_dv_exprs = [self.L.diff(v) for v in self.v_names]
        self._reserved = {"dt"} | {f"_z{i}" for i in range(self.n + self.m)} | {f"_p{i}" for i in range(self.n)}
        if self._reserved & set(self.q_names + self.v_names):
            raise ValueError("coordinate names collide with internal names")

    def __repr__(self):
        return f"ConstrainedLagrangian(n={self.n}, m={self.m}, L={self.L})"

    def _one_form(self, c) -> list[Expr]:
        if isinstance(c, str):
            diffs = [f"d{v}" for v in self.q_names]
            e = parse_expr(c, self.q_names + tuple(diffs))
            coeffs = [e.diff(d) for d in diffs]
            rest = e.subs({d: Const(0) for d in diffs})
            if not (isinstance(rest, Const) and rest.value == 0) or any(
                set(diffs) & k.free_vars() for k in coeffs
            ):
                raise ValueError(f"constraint {c!r} is not linear in the differentials")
            return coeffs
        coeffs = [_expr(x, self.q_names) for x in c]
        if len(coeffs) != self.n:
            raise ValueError(f"constraint needs {self.n} coefficients")
        return coeffs

    @property
    def _layout(self):
        return [("q", self.q_names), ("v", self.v_names)]

    @cached_property
    def lagrangian(self) -> Callable:
        return compile_scalar(self.L, self._layout, name="L")

    @cached_property
    def dL_dq(self) -> Callable:
        return compile_vector(self.dL_dq_exprs, self._layout, name="dL_dq")

    @cached_property
    def dL_dv(self) -> Callable:
        return compile_vector(self.dL_dv_exprs, self._layout, name="dL_dv")

    @cached_property
    def mass_matrix(self) -> Callable:
        """``d2L/dv_i dv_j``."""
        return compile_matrix(jacobian(self.dL_dv_exprs, self.v_names), self._layout, name="mass")

    @cached_property
    def mixed_hessian(self) -> Callable:
        """``d2L/dv_i dq_j``."""
        return compile_matrix(jacobian(self.dL_dv_exprs, self.q_names), self._layout, name="mixed")

    @cached_property
    def constraint_matrix(self) -> Callable:
        return compile_matrix(self.A_exprs, [("q", self.q_names)], ncols=self.n, name="A")

    @cached_property
    def constraint_rate(self) -> Callable:
        """``dA/dt = sum_k dA/dq_k v_k`` as an ``m x n`` matrix."""
        rows = [
            [sum((a.diff(qk) * Var(vk) for qk, vk in zip(self.q_names, self.v_names)), Const(0)) for a in row]
            for row in self.A_exprs
        ]
        return compile_matrix(rows, self._layout, ncols=self.n, name="Adot")

    @cached_property
    def energy_expr(self) -> Expr:
        return sum((Var(v) * d for v, d in zip(self.v_names, self.dL_dv_exprs)), Const(0)) - self.L

    @cached_property
    def energy_fn(self) -> Callable:
        return compile_scalar(self.energy_expr, self._layout, name="E")

    @cached_property
    def energy_samples(self) -> Callable:
        return compile_scalar(self.energy_expr, self._layout, vectorized=True, name="E_samples")

    def energy(self, s: State) -> float:
        return float(self.energy_fn(s.q, s.p))

    def constraint_residual(self, q, v) -> float:
        if not self.m:
            return 0.0
        return float(np.max(np.abs(self.constraint_matrix(q) @ v)))

    def momentum(self, q, v) -> np.ndarray:
        return self.dL_dv(q, v)

    def velocity(self, q, p, guess=None) -> np.ndarray:
        """Invert the Legendre map ``p = dL/dv(q, v)`` by Newton."""
        v0 = np.zeros(self.n) if guess is None else guess
        return newton(lambda v: self.dL_dv(q, v) - p, lambda v: self.mass_matrix(q, v), v0)

    def constrained_acceleration(self, q, v) -> tuple[np.ndarray, np.ndarray]:
        """Acceleration and multiplier of the continuous constrained equations.

        Solves ``M a - A^T lam = dL/dq - (d2L/dv dq) v`` together with
        ``A a + (dA/dt) v = 0``.
        """
        M = self.mass_matrix(q, v)
        rhs = self.dL_dq(q, v) - self.mixed_hessian(q, v) @ v
        if not self.m:
            return np.linalg.solve(M, rhs), np.zeros(0)
        A = self.constraint_matrix(q)
        n, m = self.n, self.m
        K = np.zeros((n + m, n + m))
        K[:n, :n] = M
        K[:n, n:] = -A.T
        K[n:, :n] = A
        b = np.concatenate([rhs, -self.constraint_rate(q, v) @ v])
        sol = np.linalg.solve(K, b)
        return sol[:n], sol[n:]

    def constraint_force_momentum_rate(self, q, v) -> tuple[np.ndarray, np.ndarray]:
        """``p' = dL/dq + A^T lam`` with the continuous multiplier ``lam``."""
        _, lam = self.constrained_acceleration(q, v)
        force = self.dL_dq(q, v)
        if self.m:
            force = force + self.constraint_matrix(q).T @ lam
        return force, lam

    @cached_property
    def _dirac_system(self) -> tuple[Callable, Callable]:
        """Residual and Jacobian of the Dirac-1 step in ``z = (v+, lam)``.

        Parameters are the current ``q``, momentum ``p`` and step ``dt``::

            dL/dv(q + dt v+, v+) - p - dt (dL/dq(q, v+) + A(q)^T lam) = 0
            A(q + dt v+) v+ = 0
        """
        n, m = self.n, self.m
        znames = [f"_z{i}" for i in range(n + m)]
        pnames = [f"_p{i}" for i in range(n)]
        w = [Var(z) for z in znames[:n]]
        lam = [Var(z) for z in znames[n:]]
        dt = Var("dt")
        q_plus = {qn: Var(qn) + dt * wi for qn, wi in zip(self.q_names, w)}
        v_new = dict(zip(self.v_names, w))
        res = []
        for i in range(n):
            legendre = self.dL_dv_exprs[i].subs({**q_plus, **v_new})
            force = self.dL_dq_exprs[i].subs(v_new)
            force = force + sum((lam[a] * self.A_exprs[a][i] for a in range(m)), Const(0))
            res.append(legendre - Var(pnames[i]) - dt * force)
        for a in range(m):
            res.append(sum((self.A_exprs[a][k].subs(q_plus) * w[k] for k in range(n)), Const(0)))
        layout = [("z", znames), ("q", self.q_names), ("p", pnames), ("dt", None)]
        return (
            compile_vector(res, layout, name="dirac1_residual"),
            compile_matrix(jacobian(res, znames), layout, name="dirac1_jacobian"),
        )


class PortHamiltonian:
    """``x' = (J(x) - R(x)) grad H(x) + g(x) f(t)``.

    ``J`` holds the strict upper triangle ``{(i, j): expr}`` with ``i < j``
    (1-based), ``R`` the upper triangle including the diagonal, ``g`` is
    ``{(i, k): expr}`` and ``f`` a list of expressions in ``t``.
    """

    kind = "port"

    def __init__(
        self,
        H,
        n: int,
        J: Mapping[tuple[int, int], object] | None = None,
        R: Mapping[tuple[int, int], object] | None = None,
        g: Mapping[tuple[int, int], object] | None = None,
        f: Sequence = (),
        x_names: Sequence[str] | None = None,
    ):
        self.n = int(n)
        self.x_names = _names("x", self.n, x_names)
        if "t" in self.x_names or "dt" in self.x_names:
            raise ValueError("'t' and 'dt' are reserved names")
        allowed = self.x_names
        self.H = _expr(H, allowed)
        self.k = len(f)
        zero = Const(0)
        Jm = [[zero] * self.n for _ in range(self.n)]
        for (i, j), e in (J or {}).items():
            if not (1 <= i < j <= self.n):
                raise ValueError(f"J entries need 1 <= i < j <= n, got ({i}, {j})")
            e = _expr(e, allowed)
            Jm[i - 1][j - 1] = e
            Jm[j - 1][i - 1] = -e
        Rm = [[zero] * self.n for _ in range(self.n)]
        for (i, j), e in (R or {}).items():
            if not (1 <= i <= j <= self.n):
                raise ValueError(f"R entries need 1 <= i <= j <= n, got ({i}, {j})")
            e = _expr(e, allowed)
            Rm[i - 1][j - 1] = e
            Rm[j - 1][i - 1] = e
        gm = [[zero] * self.k for _ in range(self.n)]
        for (i, kk), e in (g or {}).items():
            if not (1 <= i <= self.n and 1 <= kk <= self.k):
                raise ValueError(f"g entry ({i}, {kk}) out of range for n={self.n}, k={self.k}")
            gm[i - 1][kk - 1] = _expr(e, allowed)
        self.J, self.R, self.g = Jm, Rm, gm
        self.f = [_expr(e, ("t",)) for e in f]
        self.grad_exprs = [self.H.diff(x) for x in self.x_names]

    def __repr__(self):
        return f"PortHamiltonian(n={self.n}, k={self.k}, H={self.H})"

    def _field_exprs(self) -> list[Expr]:
        n = self.n
        out = []
        for i in range(n):
            e = sum(((self.J[i][j] - self.R[i][j]) * self.grad_exprs[j] for j in range(n)), Const(0))
            e = e + sum((self.g[i][a] * self.f[a] for a in range(self.k)), Const(0))
            out.append(e)
        return out

    @property
    def _layout(self):
        return [("x", self.x_names), ("t", None)]

    @cached_property
    def vector_field(self) -> Callable:
        return compile_vector(self._field_exprs(), self._layout, name="port_field")

    @cached_property
    def hamiltonian(self) -> Callable:
        return compile_scalar(self.H, [("x", self.x_names)], name="H")

    @cached_property
    def hamiltonian_samples(self) -> Callable:
        return compile_scalar(self.H, [("x", self.x_names)], vectorized=True, name="H_samples")

    @cached_property
    def dissipation_matrix(self) -> Callable:
        return compile_matrix(self.R, [("x", self.x_names)], ncols=self.n, name="R")

    @cached_property
    def supplied_power(self) -> Callable:
        """``-grad H^T R grad H + grad H^T g f(t)``."""
        n = self.n
        gH = self.grad_exprs
        e = Const(0)
        for i in range(n):
            for j in range(n):
                e = e - gH[i] * self.R[i][j] * gH[j]
            for a in range(self.k):
                e = e + gH[i] * self.g[i][a] * self.f[a]
        return compile_scalar(e, self._layout, name="power")

    @cached_property
    def _midpoint_system(self) -> tuple[Callable, Callable]:
        n = self.n
        xnew = [f"_X{i}" for i in range(n)]
        dt = Var("dt")
        mid = {x: (Var(x) + Var(X)) * Const(0.5) for x, X in zip(self.x_names, xnew)}
        mid["t"] = Var("t") + dt * Const(0.5)
        field_exprs = self._field_exprs()
        res = [Var(xnew[i]) - Var(self.x_names[i]) - dt * field_exprs[i].subs(mid) for i in range(n)]
        layout = [("z", xnew), ("x", self.x_names), ("t", None), ("dt", None)]
        return (
            compile_vector(res, layout, name="midpoint_residual"),
            compile_matrix(jacobian(res, xnew), layout, name="midpoint_jacobian"),
        )

    def energy(self, s: State) -> float:
        return float(self.hamiltonian(s.q))

    def check_dissipation(self, samples: int = 32, seed: int = 0, scale: float = 2.0) -> bool:
        """``R(x)`` symmetric positive semidefinite at seeded random states."""
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            x = rng.uniform(-scale, scale, self.n)
            if np.min(np.linalg.eigvalsh(self.dissipation_matrix(x))) < -1e-12:
                return False
        return True


# steppers ----------------------------------------------------------------


def _require_h(h: float):
    if not (h >= 0 and math.isfinite(h)):
        raise ValueError(f"step size must be finite and non-negative, got {h}")


def step_explicit_euler(sys, s: State, h: float) -> State:
    """``q+ = q + h dH/dp``, ``p+ = p - h dH/dq``, both at ``s``.

    For a :class:`ConstrainedLagrangian` the same update is applied to
    ``(q, p = dL/dv)`` with the constraint force of the continuous multiplier
    added to ``p'``; the returned state carries velocities again.
    """
    if isinstance(sys, CanonicalHamiltonian):
        return State(s.t + h, s.q + h * sys.dH_dp(s.q, s.p), s.p - h * sys.dH_dq(s.q, s.p))
    if isinstance(sys, ConstrainedLagrangian):
        force, lam = sys.constraint_force_momentum_rate(s.q, s.v)
        p = sys.momentum(s.q, s.v)
        q_new = s.q + h * s.v
        p_new = p + h * force
        return State(s.t + h, q_new, sys.velocity(q_new, p_new, s.v), lam)
    raise TypeError(f"explicit Euler does not apply to {type(sys).__name__}")


def step_symplectic_euler(sys, s: State, h: float) -> State:
    """``p+ = p - h dH/dq(q, p+)``, then ``q+ = q + h dH/dp(q, p+)``.

    Explicit for separable ``H``; otherwise ``p+`` comes from Newton. For a
    :class:`ConstrainedLagrangian` the momentum equation includes the
    continuous constraint force and is solved by fixed-point iteration.
    """
    _require_h(h)
    if isinstance(sys, CanonicalHamiltonian):
        if sys.separable:
            p_new = s.p - h * sys.dH_dq(s.q, s.p)
        else:
            eye = np.eye(sys.n)
            p_new = newton(
                lambda P: P - s.p + h * sys.dH_dq(s.q, P),
                lambda P: eye + h * sys.d2H_dqdp(s.q, P),
                s.p,
            )
        return State(s.t + h, s.q + h * sys.dH_dp(s.q, p_new), p_new)
    if isinstance(sys, ConstrainedLagrangian):
        p = sys.momentum(s.q, s.v)
        P = p.copy()
        v = s.v
        for _ in range(NEWTON_MAX_ITER):
            v = sys.velocity(s.q, P, v)
            force, lam = sys.constraint_force_momentum_rate(s.q, v)
            P_next = p + h * force
            done = np.max(np.abs(P_next - P)) <= 1e-14 * (1.0 + np.max(np.abs(P_next)))
            P = P_next
            if done:
                break
        else:
            raise ConvergenceError("symplectic Euler fixed point did not converge")
        v = sys.velocity(s.q, P, v)
        q_new = s.q + h * v
        return State(s.t + h, q_new, sys.velocity(q_new, P, v), lam)
    raise TypeError(f"symplectic Euler does not apply to {type(sys).__name__}")


def step_verlet(sys: CanonicalHamiltonian, s: State, h: float) -> State:
    """Kick-drift-kick Stoermer-Verlet for separable ``H = T(p) + V(q)``."""
    if not isinstance(sys, CanonicalHamiltonian) or not sys.separable:
        raise ValueError("Verlet needs a separable canonical Hamiltonian")
    p_half = s.p - (0.5 * h) * sys.dH_dq(s.q, s.p)
    q_new = s.q + h * sys.dH_dp(s.q, p_half)
    p_new = p_half - (0.5 * h) * sys.dH_dq(q_new, p_half)
    return State(s.t + h, q_new, p_new)


def step_dirac1(sys: ConstrainedLagrangian, s: State, h: float) -> State:
    """First-order Lagrange-Dirac step.

    Solves for ``(v+, lam)``::

        q+ = q + h v+
        p+ = p + h (dL/dq(q, v+) + A(q)^T lam)
        p+ = dL/dv(q+, v+)
        A(q+) v+ = 0

    with ``p = dL/dv(q, v)``. Newton is warm-started from ``s.v`` and
    ``s.lam`` (zero if absent). ``h = 0`` returns ``s`` unchanged.
    """
    if not isinstance(sys, ConstrainedLagrangian):
        raise TypeError("Dirac-1 needs a ConstrainedLagrangian")
    _require_h(h)
    if h == 0:
        return State(s.t, s.q.copy(), s.p.copy(), None if s.lam is None else s.lam.copy())
    residual, jac = sys._dirac_system
    p = sys.momentum(s.q, s.v)
    lam0 = s.lam if s.lam is not None and len(s.lam) == sys.m else np.zeros(sys.m)
    z = newton(residual, jac, np.concatenate([s.v, lam0]), (s.q, p, float(h)))
    v_new = z[: sys.n]
    return State(s.t + h, s.q + h * v_new, v_new, z[sys.n :])


def step_port_hamiltonian(sys: PortHamiltonian, s: State, h: float) -> State:
    """Implicit midpoint: ``x+ = x + h F((x + x+)/2, t + h/2)``."""
    if not isinstance(sys, PortHamiltonian):
        raise TypeError("implicit midpoint stepper needs a PortHamiltonian")
    if h == 0:
        return State(s.t, s.q.copy())
    residual, jac = sys._midpoint_system
    x_new = newton(residual, jac, s.q, (s.q, s.t, float(h)))
    return State(s.t + h, x_new)


METHODS = {
    "explicit_euler": step_explicit_euler,
    "symplectic_euler": step_symplectic_euler,
    "verlet": step_verlet,
    "dirac1": step_dirac1,
    "midpoint": step_port_hamiltonian,
}

_COMPATIBLE = {
    "hamiltonian": {"explicit_euler", "symplectic_euler", "verlet"},
    "lagrangian": {"explicit_euler", "symplectic_euler", "dirac1"},
    "port": {"midpoint"},
}

_KERNEL_CODES = {
    "explicit_euler": _kernels.EXPLICIT_EULER,
    "symplectic_euler": _kernels.SYMPLECTIC_EULER,
    "verlet": _kernels.VERLET,
}


# records -----------------------------------------------------------------


@dataclass(eq=False)
class TrajectoryRecord:
    """Sampled trajectory with per-sample diagnostics.

    ``p`` holds momenta (Hamiltonian), velocities (Lagrangian) or is
    ``None`` (port-Hamiltonian, whose state is ``q``). ``power_residual[k]``
    belongs to the step that ends at sample ``k``; entry 0 is NaN.
    """

    kind: str
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray | None
    energy: np.ndarray
    constraint_residual: np.ndarray | None = None
    power_residual: np.ndarray | None = None
    lam: np.ndarray | None = None
    method: str = ""

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, k: int) -> State:
        return State(
            self.t[k],
            self.q[k],
            None if self.p is None else self.p[k],
            None if self.lam is None else self.lam[k],
        )

    @property
    def final(self) -> State:
        return self[len(self) - 1]

    def columns(self) -> list[str]:
        n = self.q.shape[1]
        if self.kind == "port":
            state = [f"x{i}" for i in range(1, n + 1)]
        else:
            second = "p" if self.kind == "hamiltonian" else "v"
            state = [f"q{i}" for i in range(1, n + 1)] + [f"{second}{i}" for i in range(1, n + 1)]
        return ["t"] + state + ["energy", "constraint_residual", "power_residual"]


def _num_steps(T: float, h: float) -> int:
    if T < 0 or not math.isfinite(T):
        raise ValueError(f"horizon must be finite and non-negative, got {T}")
    if T == 0:
        return 0
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    ratio = T / h
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return int(nearest)
    return int(math.floor(ratio))


def _record(sys, method: str, ts, qs, ps, lams=None, power=None) -> TrajectoryRecord:
    N = len(ts)
    if sys.kind == "hamiltonian":
        energy = _eval_samples(sys.hamiltonian_samples, N, qs, ps)
        cres = None
    elif sys.kind == "lagrangian":
        energy = _eval_samples(sys.energy_samples, N, qs, ps)
        cres = np.array([sys.constraint_residual(q, v) for q, v in zip(qs, ps)]) if sys.m else np.zeros(N)
    else:
        energy = _eval_samples(sys.hamiltonian_samples, N, qs)
        cres = None
    return TrajectoryRecord(sys.kind, np.asarray(ts, float), qs, ps, energy, cres, power, lams, method)


def simulate(sys, method: str, s0: State, h: float, T: float, stride: int = 1) -> TrajectoryRecord:
    """Run ``floor(T/h)`` steps of ``method`` and record every ``stride``-th state.

    Separable canonical systems run through the compiled kernel; everything
    else steps in Python. Identical inputs give identical records.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    if method not in _COMPATIBLE[sys.kind]:
        raise ValueError(f"method {method!r} does not apply to a {sys.kind} system")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    nsteps = _num_steps(T, h)
    nsamp = nsteps // stride + 1
    if sys.kind == "hamiltonian" and method == "verlet" and not sys.separable:
        raise ValueError("Verlet needs a separable Hamiltonian")

    if sys.kind == "hamiltonian" and sys.separable:
        grad_t, grad_v = sys.kernel_gradients
        qs, ps = _kernels.separable_run(
            _KERNEL_CODES[method], grad_t, grad_v, s0.q.copy(), s0.p.copy(), float(h), nsteps, stride
        )
        bad = ~(np.isfinite(qs).all(axis=1) & np.isfinite(ps).all(axis=1))
        if bad.any():
            # the kernel does not stop early; report the last step of the first bad stride
            k = int(np.argmax(bad))
            raise StepError(k * stride - 1, FloatingPointError("non-finite state"))
        ts = s0.t + np.arange(nsamp) * stride * h
        return _record(sys, method, ts, qs, ps)

    step = METHODS[method]
    n = len(s0.q)
    ts = np.empty(nsamp)
    qs = np.empty((nsamp, n))
    ps = None if s0.p is None else np.empty((nsamp, len(s0.p)))
    lams = np.full((nsamp, sys.m), np.nan) if sys.kind == "lagrangian" else None
    power = np.full(nsamp, np.nan) if sys.kind == "port" else None
    ts[0], qs[0] = s0.t, s0.q
    if ps is not None:
        ps[0] = s0.p
    if lams is not None and s0.lam is not None and len(s0.lam) == sys.m:
        lams[0] = s0.lam
    s = s0
    j = 1
    for k in range(nsteps):
        try:
            new = step(sys, s, h)
        except (ConvergenceError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            raise StepError(k, exc) from exc
        new.t = s0.t + (k + 1) * h
        if not new.is_finite():
            raise StepError(k, FloatingPointError("non-finite state"))
        if (k + 1) % stride == 0:
            ts[j], qs[j] = new.t, new.q
            if ps is not None:
                ps[j] = new.p
            if lams is not None and new.lam is not None:
                lams[j] = new.lam
            if power is not None:
                power[j] = _power_defect(sys, s, new)
            j += 1
        s = new
    return _record(sys, method, ts, qs, ps, lams, power)


def _power_defect(sys: PortHamiltonian, a: State, b: State) -> float:
    dt = b.t - a.t
    dH = float(sys.hamiltonian(b.q)) - float(sys.hamiltonian(a.q))
    return dH / dt - float(sys.supplied_power(0.5 * (a.q + b.q), a.t + 0.5 * dt))


def power_balance_residual(sys: PortHamiltonian, rec: TrajectoryRecord) -> np.ndarray:
    """Per-interval defect ``(H_{k+1} - H_k)/dt - P(x_mid, t_mid)`` between
    consecutive samples, ``P = -grad H^T R grad H + grad H^T g f``."""
    if not isinstance(sys, PortHamiltonian):
        raise TypeError("power balance needs a PortHamiltonian")
    return np.array([_power_defect(sys, rec[k], rec[k + 1]) for k in range(len(rec) - 1)])


# system spec files -------------------------------------------------------


def _parse_header(line: str, lineno: int) -> tuple[str, dict]:
    head, _, rest = line.partition("]")
    kind = head[1:].strip()
    opts = {}
    for tok in rest.split():
        key, sep, val = tok.partition("=")
        if not sep or not val.strip().isdigit():
            raise ParseError(f"line {lineno}: expected key=integer, got {tok!r}")
        opts[key.strip()] = int(val)
    return kind, opts


def _floats(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.replace(",", " ").split()])


def parse_system(text: str):
    """Parse a system spec; returns ``(system, initial_state or None)``.

    ::

        [hamiltonian] n=1
        H = 1/2*p1^2 + 1/2*q1^2

        [lagrangian] n=3
        L = ...
        constraint: sin(q3)*dq1 - cos(q3)*dq2

        [port] n=2
        H = ...
        J 1 2 = 1
        R 2 2 = 1/10
        g 2 1 = 1
        f 1 = sin(t)

        [initial]
        t = 0
        q = 1, 0
        p = 0, 0        # or v = ..., or x = ... for port systems
    """
    kind = None
    n = None
    body = []
    initial = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            name, opts = _parse_header(line, lineno)
            if name == "initial":
                section = "initial"
                continue
            if name not in ("hamiltonian", "lagrangian", "port"):
                raise ParseError(f"line {lineno}: unknown section [{name}]")
            if kind is not None:
                raise ParseError(f"line {lineno}: only one system section allowed")
            if "n" not in opts:
                raise ParseError(f"line {lineno}: section needs n=<dimension>")
            kind, n, section = name, opts["n"], "system"
            continue
        if section == "initial":
            key, sep, val = line.partition("=")
            if not sep:
                raise ParseError(f"line {lineno}: expected 'key = values'")
            initial[key.strip()] = val.strip()
        elif section == "system":
            body.append((lineno, line))
        else:
            raise ParseError(f"line {lineno}: text outside a section")
    if kind is None:
        raise ParseError("no system section found")

    def expr_of(lineno, rhs, allowed):
        try:
            return parse_expr(rhs, allowed)
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None

    if kind == "hamiltonian":
        allowed = tuple(f"q{i}" for i in range(1, n + 1)) + tuple(f"p{i}" for i in range(1, n + 1))
        H = None
        for lineno, line in body:
            key, sep, rhs = line.partition("=")
            if key.strip() != "H" or not sep:
                raise ParseError(f"line {lineno}: expected 'H = <expr>'")
            H = expr_of(lineno, rhs, allowed)
        if H is None:
            raise ParseError("[hamiltonian] needs 'H = ...'")
        sys = CanonicalHamiltonian(H, n)
        second = "p"
    elif kind == "lagrangian":
        allowed = tuple(f"q{i}" for i in range(1, n + 1)) + tuple(f"v{i}" for i in range(1, n + 1))
        L = None
        constraints = []
        for lineno, line in body:
            if line.startswith("constraint"):
                _, sep, rhs = line.partition(":")
                if not sep:
                    raise ParseError(f"line {lineno}: expected 'constraint: <one-form>'")
                constraints.append(rhs.strip())
                continue
            key, sep, rhs = line.partition("=")
            if key.strip() != "L" or not sep:
                raise ParseError(f"line {lineno}: expected 'L = <expr>'")
            L = expr_of(lineno, rhs, allowed)
        if L is None:
            raise ParseError("[lagrangian] needs 'L = ...'")
        try:
            sys = ConstrainedLagrangian(L, n, constraints)
        except (ParseError, ValueError) as exc:
            raise ParseError(str(exc)) from None
        second = "v"
    else:
        allowed = tuple(f"x{i}" for i in range(1, n + 1))
        H = None
        J, R, g, f = {}, {}, {}, {}
        for lineno, line in body:
            key, sep, rhs = line.partition("=")
            if not sep:
                raise ParseError(f"line {lineno}: expected '<key> = <expr>'")
            parts = key.split()
            if parts == ["H"]:
                H = expr_of(lineno, rhs, allowed)
            elif parts and parts[0] in ("J", "R", "g") and len(parts) == 3:
                idx = (int(parts[1]), int(parts[2]))
                {"J": J, "R": R, "g": g}[parts[0]][idx] = expr_of(lineno, rhs, allowed)
            elif parts and parts[0] == "f" and len(parts) == 2:
                f[int(parts[1])] = expr_of(lineno, rhs, ("t",))
            else:
                raise ParseError(f"line {lineno}: unrecognized entry {key.strip()!r}")
        if H is None:
            raise ParseError("[port] needs 'H = ...'")
        k = max([0] + list(f) + [kk for _, kk in g])
        flist = [f.get(a, Const(0)) for a in range(1, k + 1)]
        try:
            sys = PortHamiltonian(H, n, J, R, g, flist)
        except ValueError as exc:
            raise ParseError(str(exc)) from None
        second = None

    state = None
    if initial:
        t0 = float(initial.get("t", "0"))
        if second is None:
            x = initial.get("x", initial.get("q"))
            if x is None:
                raise ParseError("[initial] needs 'x = ...'")
            state = State(t0, _floats(x))
        else:
            if "q" not in initial or second not in initial:
                raise ParseError(f"[initial] needs 'q = ...' and '{second} = ...'")
            state = State(t0, _floats(initial["q"]), _floats(initial[second]))
        if len(state.q) != n or (state.p is not None and len(state.p) != n):
            raise ParseError(f"initial state must have {n} entries per slot")
    return sys, state


def load_system(path: str | Path):
    return parse_system(Path(path).read_text())
