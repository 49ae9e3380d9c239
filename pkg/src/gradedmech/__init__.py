"""Exact graded-geometry checks and structure-preserving integrators.

Symbolic side: graded polynomials and vector fields (:mod:`.graded`),
Q-structures, Poisson bivectors and cotangent lifts, and Dirac structures on
``TM + T*M`` (:mod:`.dirac`). Numeric side: Euler, symplectic Euler, Verlet,
a constrained Lagrange-Dirac stepper and an implicit-midpoint
port-Hamiltonian stepper (:mod:`.integrators`), with the sleigh and
oscillator benchmarks in :mod:`.bench`.
"""

from .graded import (
    BivectorSpec,
    GradedContext,
    GradedPolynomial,
    GradedVectorField,
    Verdict,
    bivector_to_q,
    commutator,
    cotangent_lift,
    de_rham_q,
    is_q_structure,
    jacobi_residual,
    poisson_preservation_check,
)
from .integrators import (
    CanonicalHamiltonian,
    ConstrainedLagrangian,
    PortHamiltonian,
    State,
    TrajectoryRecord,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "BivectorSpec",
    "GradedContext",
    "GradedPolynomial",
    "GradedVectorField",
    "Verdict",
    "bivector_to_q",
    "commutator",
    "cotangent_lift",
    "de_rham_q",
    "is_q_structure",
    "jacobi_residual",
    "poisson_preservation_check",
    "CanonicalHamiltonian",
    "ConstrainedLagrangian",
    "PortHamiltonian",
    "State",
    "TrajectoryRecord",
    "simulate",
]
