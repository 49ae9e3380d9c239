import math

import mpmath
import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from gradedmech._parse import ParseError
from gradedmech.bench import DEFAULT_INITIAL, sleigh_system
from gradedmech.integrators import (
    CanonicalHamiltonian,
    ConstrainedLagrangian,
    ConvergenceError,
    PortHamiltonian,
    State,
    StepError,
    newton,
    parse_system,
    power_balance_residual,
    simulate,
    step_dirac1,
    step_explicit_euler,
    step_port_hamiltonian,
    step_symplectic_euler,
    step_verlet,
)

OSC = CanonicalHamiltonian("1/2*p1^2 + 1/2*q1^2", 1)
FREE = CanonicalHamiltonian("1/2*p1^2 + 1/2*p2^2", 2)
S0 = State(0.0, [1.0], [0.0])


# Newton ------------------------------------------------------------------------


def test_newton_solves_scalar_equation():
    z = newton(lambda z: np.array([z[0] ** 3 - 2.0]), lambda z: np.array([[3 * z[0] ** 2]]), np.array([1.0]))
    assert z[0] == pytest.approx(2 ** (1 / 3), abs=1e-12)


def test_newton_reports_failure():
    with pytest.raises(ConvergenceError):
        newton(lambda z: np.array([z[0] ** 2 + 1.0]), lambda z: np.array([[2 * z[0]]]), np.array([1.0]))
    with pytest.raises(ConvergenceError):
        newton(lambda z: np.array([1.0]), lambda z: np.zeros((1, 1)), np.array([0.0]))


# canonical steppers ----------------------------------------------------------------


def test_explicit_euler_example():
    s = step_explicit_euler(OSC, S0, 0.1)
    assert (s.q[0], s.p[0]) == (1.0, -0.1)


def test_explicit_euler_free_particle():
    s = step_explicit_euler(FREE, State(0, [0.5, -1.0], [2.0, 3.0]), 0.25)
    assert s.q.tolist() == [1.0, -0.25] and s.p.tolist() == [2.0, 3.0]


def test_explicit_euler_energy_grows_monotonically():
    rec = simulate(OSC, "explicit_euler", S0, 0.01, 100.0)
    assert len(rec) == 10_001
    assert np.all(np.diff(rec.energy) > 0)


def test_symplectic_euler_example():
    s = step_symplectic_euler(OSC, S0, 0.1)
    assert s.p[0] == pytest.approx(-0.1, abs=1e-15)
    assert s.q[0] == pytest.approx(0.99, abs=1e-15)


def test_symplectic_euler_zero_step_is_identity():
    s0 = State(0.0, [0.3], [-0.7])
    s = step_symplectic_euler(OSC, s0, 0.0)
    assert s.q.tolist() == s0.q.tolist() and s.p.tolist() == s0.p.tolist()


def test_symplectic_euler_bounded_drift():
    rec = simulate(OSC, "symplectic_euler", S0, 0.01, 1000.0)
    drift = np.abs(rec.energy - rec.energy[0])
    assert drift.max() < 10 * drift[:101].max()


def test_nonseparable_symplectic_euler_solves_implicit_equation():
    sys = CanonicalHamiltonian("1/2*p1^2*(1 + q1^2) + 1/2*q1^2", 1)
    assert not sys.separable
    s0 = State(0.0, [0.8], [0.4])
    h = 0.05
    s = step_symplectic_euler(sys, s0, h)
    # p+ = p - h dH/dq(q, p+)
    assert s.p[0] == pytest.approx(s0.p[0] - h * (s.p[0] ** 2 * s0.q[0] + s0.q[0]), abs=1e-13)
    assert s.q[0] == pytest.approx(s0.q[0] + h * s.p[0] * (1 + s0.q[0] ** 2), abs=1e-13)


def test_verlet_second_order():
    T = 2.0
    exact = np.array([math.cos(T), -math.sin(T)])
    errs = []
    for h in (0.02, 0.01, 0.005):
        rec = simulate(OSC, "verlet", S0, h, T)
        errs.append(np.max(np.abs(np.array([rec.q[-1, 0], rec.p[-1, 0]]) - exact)))
    for a, b in zip(errs, errs[1:]):
        assert math.log2(a / b) == pytest.approx(2.0, abs=0.1)


def test_verlet_free_particle_exact():
    s = step_verlet(FREE, State(0, [0.0, 1.0], [0.5, -2.0]), 0.5)
    assert s.q.tolist() == [0.25, 0.0] and s.p.tolist() == [0.5, -2.0]


def test_verlet_time_reversal():
    sys = CanonicalHamiltonian("1/2*p1^2 + 1 - cos(q1)", 1)
    s0 = State(0.0, [0.7], [0.2])
    back = step_verlet(sys, step_verlet(sys, s0, 0.1), -0.1)
    assert np.allclose([back.q[0], back.p[0]], [0.7, 0.2], atol=1e-12, rtol=0)


def test_verlet_rejects_nonseparable():
    sys = CanonicalHamiltonian("1/2*p1^2*q1^2", 1)
    with pytest.raises(ValueError):
        step_verlet(sys, S0, 0.1)
    with pytest.raises(ValueError):
        simulate(sys, "verlet", S0, 0.1, 1.0)


@settings(max_examples=30)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.001, 0.2))
def test_kernel_matches_python_steppers(q, p, h):
    s = State(0.0, [q], [p])
    for method, step in (("explicit_euler", step_explicit_euler), ("symplectic_euler", step_symplectic_euler), ("verlet", step_verlet)):
        rec = simulate(OSC, method, s, h, 5 * h)
        ref = s
        for _ in range(5):
            ref = step(OSC, ref, h)
        assert rec.q[-1, 0] == pytest.approx(ref.q[0], abs=1e-13)
        assert rec.p[-1, 0] == pytest.approx(ref.p[0], abs=1e-13)


# simulate --------------------------------------------------------------------------


def test_zero_horizon_returns_initial_state():
    rec = simulate(OSC, "verlet", S0, 0.1, 0.0)
    assert len(rec) == 1 and rec.q[0, 0] == 1.0 and rec.t[0] == 0.0


def test_sample_count_and_times():
    rec = simulate(OSC, "symplectic_euler", S0, 0.01, 1.0, stride=7)
    assert len(rec) == 100 // 7 + 1
    assert np.all(np.diff(rec.t) > 0)
    assert rec.t[1] == pytest.approx(0.07)


def test_simulate_rejects_bad_inputs():
    with pytest.raises(ValueError):
        simulate(OSC, "dirac1", S0, 0.1, 1.0)
    with pytest.raises(ValueError):
        simulate(OSC, "rk4", S0, 0.1, 1.0)
    with pytest.raises(ValueError):
        simulate(OSC, "verlet", S0, -0.1, 1.0)
    with pytest.raises(ValueError):
        simulate(OSC, "verlet", S0, 0.1, 1.0, stride=0)


def test_simulate_is_deterministic():
    sys = sleigh_system()
    a = simulate(sys, "dirac1", DEFAULT_INITIAL, 0.01, 1.0)
    b = simulate(sys, "dirac1", DEFAULT_INITIAL, 0.01, 1.0)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.p, b.p) and np.array_equal(a.energy, b.energy)
    c = simulate(OSC, "verlet", S0, 0.01, 10.0)
    d = simulate(OSC, "verlet", S0, 0.01, 10.0)
    assert np.array_equal(c.q, d.q) and np.array_equal(c.p, d.p)


def test_symplectic_euler_orbit_annulus():
    h = 0.01
    rec = simulate(OSC, "symplectic_euler", S0, h, 2 * math.pi * 100)
    r = np.hypot(rec.q[:, 0], rec.p[:, 0])
    assert r.max() - r.min() < h


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_step():
    sys = CanonicalHamiltonian("1/2*p1^2 + q1^4", 1)
    with pytest.raises(StepError) as info:
        simulate(sys, "explicit_euler", State(0, [10.0], [0.0]), 0.5, 100.0)
    assert info.value.step >= 0
    lag = ConstrainedLagrangian("1/2*v1^2 - q1^4", 1)
    with pytest.raises(StepError) as info:
        simulate(lag, "explicit_euler", State(0, [10.0], [0.0]), 0.5, 100.0)
    assert info.value.step >= 0


# constrained Lagrangian --------------------------------------------------------------


def test_dirac1_free_particle_with_constraint():
    sys = ConstrainedLagrangian("1/2*v1^2 + 1/2*v2^2", 2, ["dq2"])
    s = step_dirac1(sys, State(0.0, [0.0, 0.0], [1.0, 0.0]), 0.1)
    assert s.q.tolist() == pytest.approx([0.1, 0.0], abs=1e-15)
    assert sys.constraint_residual(s.q, s.v) == 0.0


def test_dirac1_zero_step_is_identity():
    sys = sleigh_system()
    s = step_dirac1(sys, DEFAULT_INITIAL, 0.0)
    assert s.q.tolist() == DEFAULT_INITIAL.q.tolist() and s.v.tolist() == DEFAULT_INITIAL.v.tolist()


def test_dirac1_without_constraints_is_symplectic_euler():
    lag = ConstrainedLagrangian("1/2*v1^2 - (1 - cos(q1))", 1)
    ham = CanonicalHamiltonian("1/2*p1^2 + 1 - cos(q1)", 1)
    s_lag = State(0.0, [0.4], [0.3])
    s_ham = State(0.0, [0.4], [0.3])
    for _ in range(20):
        s_lag = step_dirac1(lag, s_lag, 0.05)
        s_ham = step_symplectic_euler(ham, s_ham, 0.05)
    assert s_lag.q[0] == pytest.approx(s_ham.q[0], abs=1e-12)
    assert s_lag.v[0] == pytest.approx(s_ham.p[0], abs=1e-12)


def _sleigh_residual_oracle(q, v, h, m=1, a=sp.Rational(1, 10), I=1):
    """The Dirac-1 equations written directly in sympy, from the sleigh Lagrangian."""
    w = sp.symbols("w1:4")
    lam = sp.Symbol("lam")
    X, Y, TH, VX, VY, W = sp.symbols("X Y TH VX VY W")
    L = m / sp.Integer(2) * (VX**2 + VY**2 + (sp.Rational(I) / m + a**2) * W**2 - 2 * a * sp.sin(TH) * VX * W + 2 * a * sp.cos(TH) * VY * W)
    Q, V = (X, Y, TH), (VX, VY, W)
    at = lambda e, qq, vv: e.subs(dict(zip(Q, qq))).subs(dict(zip(V, vv)))
    omega = (sp.sin(TH), -sp.cos(TH), 0)
    p = [at(L.diff(Vi), q, v) for Vi in V]
    qn = [q[i] + h * w[i] for i in range(3)]
    eqs = [at(L.diff(V[i]), qn, w) - p[i] - h * (at(L.diff(Q[i]), q, w) + lam * at(sp.sympify(omega[i]), q, w)) for i in range(3)]
    eqs.append(sum(at(sp.sympify(omega[i]), qn, w) * w[i] for i in range(3)))
    return eqs, list(w) + [lam]


def test_dirac1_matches_independent_root_find():
    s0 = DEFAULT_INITIAL
    h = 1e-3
    eqs, unknowns = _sleigh_residual_oracle([sp.Float(x, 30) for x in s0.q], [sp.Float(x, 30) for x in s0.v], sp.Float(h, 30))
    mpmath.mp.dps = 30
    sol = sp.nsolve(eqs, unknowns, [1, 0, 1, 0], prec=30)
    s = step_dirac1(sleigh_system(), s0, h)
    got = np.concatenate([s.v, s.lam])
    assert np.max(np.abs(got - np.array([float(x) for x in sol]))) <= 1e-10


def test_sleigh_dirac1_keeps_constraint():
    rec = simulate(sleigh_system(), "dirac1", DEFAULT_INITIAL, 1e-3, 2.0)
    assert rec.constraint_residual.max() <= 1e-10


def test_sleigh_mass_matrix_positive_definite():
    sys = sleigh_system()
    rng = np.random.default_rng(3)
    for _ in range(50):
        q, v = rng.uniform(-4, 4, 3), rng.uniform(-2, 2, 3)
        assert np.linalg.eigvalsh(sys.mass_matrix(q, v)).min() > 0


def test_constraint_one_form_parsing():
    sys = sleigh_system()
    assert sys.constraint_matrix(np.zeros(3)).tolist() == [[0.0, -1.0, 0.0]]
    with pytest.raises(ValueError):
        ConstrainedLagrangian("1/2*v1^2", 1, ["dq1^2"])
    with pytest.raises(ValueError):
        ConstrainedLagrangian("1/2*v1^2", 1, ["dq1 + 1"])


# port-Hamiltonian ------------------------------------------------------------------


def _pendulum(r="1/10", forcing="sin(t)"):
    return PortHamiltonian("1/2*x2^2 + 1 - cos(x1)", 2, J={(1, 2): 1}, R={(2, 2): r}, g={(2, 1): 1}, f=[forcing])


def test_midpoint_conserves_quadratic_energy():
    sys = PortHamiltonian("1/2*x1^2 + 1/2*x2^2 + 1/4*x3^2", 3, J={(1, 2): 1, (2, 3): 2})
    rec = simulate(sys, "midpoint", State(0, [1.0, 0.5, -0.3]), 0.1, 20.0)
    assert np.max(np.abs(rec.energy - rec.energy[0])) <= 1e-12


def test_pure_dissipation_decays_monotonically():
    sys = PortHamiltonian("1/2*x1^2", 1, R={(1, 1): 1})
    rec = simulate(sys, "midpoint", State(0, [2.0]), 0.05, 5.0)
    assert np.all(np.diff(np.abs(rec.q[:, 0])) < 0)


def test_dissipation_never_raises_energy():
    rec = simulate(_pendulum(forcing="0"), "midpoint", State(0, [2.5, 0.0]), 0.05, 30.0)
    assert np.all(np.diff(rec.energy) <= 1e-10)


def test_conservative_power_residual_vanishes():
    sys = PortHamiltonian("1/2*x1^2 + x2^2", 2, J={(1, 2): 3})
    rec = simulate(sys, "midpoint", State(0, [1.0, 0.3]), 0.01, 5.0)
    assert np.max(np.abs(power_balance_residual(sys, rec))) <= 1e-10


def test_power_residual_second_order():
    sys = _pendulum()
    peaks = []
    for h in (0.04, 0.02, 0.01):
        rec = simulate(sys, "midpoint", State(0, [1.0, 0.0]), h, 4.0)
        peaks.append(np.max(np.abs(power_balance_residual(sys, rec))))
    for a, b in zip(peaks, peaks[1:]):
        assert 1.7 <= math.log2(a / b) <= 2.3


def test_dissipative_power_residual_small():
    sys = PortHamiltonian("1/2*x1^2", 1, R={(1, 1): 1})
    rec = simulate(sys, "midpoint", State(0, [1.0]), 1e-3, 1.0)
    assert np.max(np.abs(power_balance_residual(sys, rec))) <= 1e-8


def test_power_residual_recorded_per_step():
    sys = _pendulum()
    rec = simulate(sys, "midpoint", State(0, [1.0, 0.0]), 0.01, 1.0)
    assert math.isnan(rec.power_residual[0])
    assert rec.power_residual[1:] == pytest.approx(power_balance_residual(sys, rec), rel=1e-12, abs=1e-15)


def test_constant_input_power_residual_is_rounding():
    # midpoint is exact for quadratic H, so the defect is rounding only
    sys = PortHamiltonian("1/2*x1^2 + 1/2*x2^2", 2, g={(1, 1): 1, (2, 2): 1}, f=["1", "-1/2"])
    for h in (0.1, 0.05):
        rec = simulate(sys, "midpoint", State(0, [0.2, 0.4]), h, 2.0)
        assert np.max(np.abs(power_balance_residual(sys, rec))) <= 1e-10


def test_midpoint_time_reversal():
    sys = _pendulum()
    s0 = State(0.3, [1.1, -0.4])
    fwd = step_port_hamiltonian(sys, s0, 0.1)
    back = step_port_hamiltonian(sys, fwd, -0.1)
    assert np.max(np.abs(back.q - s0.q)) <= 1e-10


def test_dissipation_matrix_check():
    assert _pendulum().check_dissipation()
    assert not _pendulum(r="-1").check_dissipation()


def test_port_structure_validation():
    with pytest.raises(ValueError):
        PortHamiltonian("x1^2", 2, J={(2, 1): 1})
    with pytest.raises(ValueError):
        PortHamiltonian("x1^2", 2, R={(2, 1): 1})
    with pytest.raises(ValueError):
        PortHamiltonian("t*x1", 1)


# system files --------------------------------------------------------------------


def test_parse_system_files(fixtures):
    for name, kind in (("oscillator.sys", "hamiltonian"), ("sleigh.sys", "lagrangian"), ("pendulum_port.sys", "port")):
        sys, s0 = parse_system((fixtures / name).read_text())
        assert sys.kind == kind
        assert s0 is not None and len(s0.q) == sys.n


@pytest.mark.parametrize(
    "text",
    [
        "H = p1\n",
        "[hamiltonian]\nH = p1\n",
        "[hamiltonian] n=1\nH = p2\n",
        "[hamiltonian] n=1\nL = p1\n",
        "[lagrangian] n=1\nconstraint dq1\nL = v1^2\n",
        "[port] n=1\nH = x1^2\nK 1 1 = 1\n",
        "[hamiltonian] n=1\nH = p1^2\n[initial]\nq = 1\n",
        "[circuit] n=1\n",
    ],
)
def test_parse_system_errors(text):
    with pytest.raises(ParseError):
        parse_system(text)
