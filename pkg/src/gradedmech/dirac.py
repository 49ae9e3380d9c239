"""Differential forms as functions on ``T[1]M`` and Dirac structures.

A p-form on a chart ``x^1..x^n`` is a graded polynomial of degree p in the
odd coordinates ``dx^1..dx^n``: the form ``f dx^i ^ dx^j`` *is* the
polynomial ``f*dxi*dxj``. The exterior derivative is the de Rham field
``sum dx^i d/dx^i`` applied to it, contraction with ``v`` is the odd
derivation ``sum v^i d/d(dx^i)``, and the Lie derivative follows from Cartan's
formula.

Trigonometric coefficients are handled by rationalization: a pair ``c, s``
declared against an angle coordinate ``t`` enters the chart as two extra
degree-0 coordinates with ``d c = -s dt`` and ``d s = c dt``; zero tests
reduce modulo ``c^2 + s^2 = 1`` first.

Three kinds of almost-Dirac subbundle of ``TM + T*M`` are supported: the
graph of a 2-form, the graph of a bivector and ``Delta + Delta°`` for a
distribution ``Delta`` given as the common kernel of one-forms.

Closure under the Courant-Dorfman bracket is tested on generators. For a
maximally isotropic ``D`` spanned by ``e_1..e_n``, a section lies in ``D``
iff it pairs to zero with every ``e_k``, and the tensor
``<[e_i, e_j], e_k>`` is function-linear in each slot on sections of ``D``;
so closure of all sections follows from vanishing on generator triples.
"""

from __future__ import annotations

import random
import warnings
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Sequence

from ._parse import ParseError
from .graded import (
    BivectorSpec,
    GradedContext,
    GradedPolynomial,
    GradedVectorField,
    Verdict,
    apply_vector_field,
    commutator,
    jacobi_residual,
)

__all__ = [
    "FormSpace",
    "PontryaginSection",
    "ZeroFormContraction",
    "GraphOfForm",
    "GraphOfBivector",
    "FromDistribution",
    "exterior_derivative",
    "interior_product",
    "lie_derivative",
    "pairing",
    "courant_dorfman_bracket",
    "generators",
    "kernel_fields",
    "isotropy_and_rank_check",
    "integrability_check",
    "courant_closure_witness",
    "parse_dirac_spec",
    "load_dirac_spec",
]

DEFAULT_SAMPLES = 32
DEFAULT_SEED = 20240611


class FormSpace:
    """Chart ``x^1..x^n`` with differentials ``dx^i`` and optional trig pairs.

    ``trigpairs`` is a sequence of ``(c, s, angle)`` triples naming the
    stand-ins for ``cos(angle)`` and ``sin(angle)``.
    """

    def __init__(self, names: Sequence[str], trigpairs: Sequence[tuple[str, str, str]] = ()):
        names = list(names)
        if not names:
            raise ValueError("a form space needs at least one coordinate")
        trig = [tuple(t) for t in trigpairs]
        for c, s, angle in trig:
            if angle not in names:
                raise ValueError(f"trig pair angle {angle!r} is not a base coordinate")
        extra = [n for c, s, _ in trig for n in (c, s)]
        diffs = [f"d{n}" for n in names]
        clash = set(diffs) & set(names + extra)
        if clash:
            raise ValueError(f"coordinate names clash with differentials: {sorted(clash)}")
        self.names = tuple(names)
        self.trigpairs = tuple(trig)
        self.ctx = GradedContext([(n, 0) for n in names + extra] + [(d, 1) for d in diffs])
        self.dim = len(names)
        self.diffs = tuple(diffs)
        comps = {n: self.ctx[d] for n, d in zip(names, diffs)}
        for c, s, angle in trig:
            dt = self.ctx[f"d{angle}"]
            comps[c] = -self.ctx[s] * dt
            comps[s] = self.ctx[c] * dt
        self.q_dr = GradedVectorField(self.ctx, comps, 1)

    def __repr__(self) -> str:
        return f"FormSpace({list(self.names)}, trigpairs={list(self.trigpairs)})"

    def poly(self, value) -> GradedPolynomial:
        if isinstance(value, GradedPolynomial):
            return value.embed(self.ctx)
        if isinstance(value, str):
            return self.ctx.parse(value)
        return self.ctx.constant(value)

    def reduce(self, f: GradedPolynomial) -> GradedPolynomial:
        """Normal form modulo ``c^2 + s^2 - 1`` for every trig pair (``s`` degree <= 1)."""
        if not self.trigpairs:
            return f
        for c, s, _ in self.trigpairs:
            ic, is_ = self.ctx.index(c), self.ctx.index(s)
            out: dict = {}
            stack = list(f.items())
            while stack:
                mono, coef = stack.pop()
                if mono[is_] < 2:
                    out[mono] = out.get(mono, 0) + coef
                    continue
                # s^k -> s^(k-2) (1 - c^2)
                m = list(mono)
                m[is_] -= 2
                stack.append((tuple(m), coef))
                m2 = list(m)
                m2[ic] += 2
                stack.append((tuple(m2), -coef))
            f = GradedPolynomial(self.ctx, out)
        return f

    def is_zero(self, f: GradedPolynomial) -> bool:
        return self.reduce(f).is_zero()

    def coordinate_field(self, i: int) -> tuple[GradedPolynomial, ...]:
        """``d/dx^i`` (0-based) as a component tuple."""
        return tuple(self.ctx.one() if k == i else self.ctx.zero() for k in range(self.dim))

    def vector(self, components: Sequence[object]) -> tuple[GradedPolynomial, ...]:
        if len(components) != self.dim:
            raise ValueError(f"expected {self.dim} components, got {len(components)}")
        out = tuple(self.poly(c) for c in components)
        for c in out:
            if any(c.ctx.degrees[self.ctx.index(v)] for v in c.variables()):
                raise ValueError("vector components must not involve differentials")
        return out

    def derivation(self, v: Sequence[GradedPolynomial]) -> GradedVectorField:
        """The degree-0 derivation for a base vector field, chain rule through trig pairs included."""
        comps = {n: c for n, c in zip(self.names, v)}
        for c, s, angle in self.trigpairs:
            va = comps.get(angle, self.ctx.zero())
            comps[c] = -self.ctx[s] * va
            comps[s] = self.ctx[c] * va
        return GradedVectorField(self.ctx, comps, 0)

    def contraction(self, v: Sequence[GradedPolynomial]) -> GradedVectorField:
        return GradedVectorField(self.ctx, {d: c for d, c in zip(self.diffs, v)}, -1)

    def form_degree(self, alpha: GradedPolynomial) -> int | None:
        return alpha.degree

    def lie_bracket(self, v, w) -> tuple[GradedPolynomial, ...]:
        c = commutator(self.derivation(v), self.derivation(w))
        return tuple(self.reduce(c.component(n)) for n in self.names)

    # Cartan calculus ---------------------------------------------------

    def d(self, alpha: GradedPolynomial) -> GradedPolynomial:
        return self.reduce(apply_vector_field(self.q_dr, alpha))

    def interior(self, v, alpha: GradedPolynomial) -> GradedPolynomial:
        return self.reduce(apply_vector_field(self.contraction(v), alpha))

    def lie(self, v, alpha: GradedPolynomial) -> GradedPolynomial:
        return self.reduce(self.interior(v, self.d(alpha)) + self.d(self.interior(v, alpha)))

    def evaluate(self, alpha: GradedPolynomial, fields: Sequence) -> GradedPolynomial:
        """``alpha(v_1, ..., v_k)`` for a k-form, so that ``alpha(v, ...) = i_v alpha``."""
        out = alpha
        for v in fields:
            out = self.interior(v, out)
        return out

    # Pontryagin bundle -------------------------------------------------

    def section(self, vector=None, form=None) -> PontryaginSection:
        vec = self.vector(vector) if vector is not None else tuple(self.ctx.zero() for _ in range(self.dim))
        eta = self.poly(form) if form is not None else self.ctx.zero()
        if eta and eta.degrees() != {1}:
            raise ValueError("form part of a section must be a one-form")
        return PontryaginSection(self, vec, eta)

    def pairing(self, s1: PontryaginSection, s2: PontryaginSection) -> GradedPolynomial:
        return self.reduce(self.interior(s2.vector, s1.form) + self.interior(s1.vector, s2.form))

    def courant(self, s1: PontryaginSection, s2: PontryaginSection) -> PontryaginSection:
        vec = self.lie_bracket(s1.vector, s2.vector)
        eta = self.lie(s1.vector, s2.form) - self.interior(s2.vector, self.d(s1.form))
        return PontryaginSection(self, vec, self.reduce(eta))

    def sample_points(self, count: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED) -> list[dict]:
        """Seeded rational points; trig pairs land on the unit circle."""
        rng = random.Random(seed)
        pts = []
        for _ in range(count):
            pt = {n: Fraction(rng.randint(-97, 97), rng.randint(1, 31)) for n in self.names}
            for c, s, _ in self.trigpairs:
                t = Fraction(rng.randint(-97, 97), rng.randint(1, 31))
                pt[c] = (1 - t * t) / (1 + t * t)
                pt[s] = 2 * t / (1 + t * t)
            pts.append(pt)
        return pts


@dataclass(frozen=True)
class PontryaginSection:
    """A section ``v + eta`` of ``TM + T*M``."""

    space: FormSpace
    vector: tuple[GradedPolynomial, ...]
    form: GradedPolynomial

    def is_zero(self) -> bool:
        return all(self.space.is_zero(c) for c in self.vector) and self.space.is_zero(self.form)

    def __str__(self) -> str:
        vec = " + ".join(f"({c})*d/d{n}" for c, n in zip(self.vector, self.space.names) if c) or "0"
        return f"[{vec}] + [{self.form}]"


def exterior_derivative(space: FormSpace, alpha: GradedPolynomial) -> GradedPolynomial:
    return space.d(alpha)


class ZeroFormContraction(UserWarning):
    """A function (0-form) was contracted with a vector field."""


def interior_product(space: FormSpace, v, alpha: GradedPolynomial) -> GradedPolynomial:
    """Contraction. A nonzero 0-form contracts to zero with a
    :class:`ZeroFormContraction` warning."""
    alpha = space.poly(alpha)
    if alpha and alpha.degrees() == {0}:
        warnings.warn("contracting a 0-form gives 0", ZeroFormContraction, stacklevel=2)
    return space.interior(space.vector(v), alpha)


def lie_derivative(space: FormSpace, v, alpha: GradedPolynomial) -> GradedPolynomial:
    return space.lie(space.vector(v), alpha)


def pairing(s1: PontryaginSection, s2: PontryaginSection) -> GradedPolynomial:
    return s1.space.pairing(s1, s2)


def courant_dorfman_bracket(s1: PontryaginSection, s2: PontryaginSection) -> PontryaginSection:
    return s1.space.courant(s1, s2)


# Dirac specs -------------------------------------------------------------


@dataclass(frozen=True)
class GraphOfForm:
    space: FormSpace
    omega: GradedPolynomial


@dataclass(frozen=True)
class GraphOfBivector:
    bivector: BivectorSpec
    space: FormSpace | None = None

    def form_space(self) -> FormSpace:
        return self.space if self.space is not None else FormSpace(self.bivector.base.names)


@dataclass(frozen=True)
class FromDistribution:
    space: FormSpace
    forms: tuple[GradedPolynomial, ...]


def _space_of(spec) -> FormSpace:
    if isinstance(spec, GraphOfBivector):
        return spec.form_space()
    return spec.space


def _det(rows: list[list[GradedPolynomial]], zero: GradedPolynomial) -> GradedPolynomial:
    n = len(rows)
    if n == 1:
        return rows[0][0]
    acc = zero
    for j in range(n):
        minor = [r[:j] + r[j + 1 :] for r in rows[1:]]
        term = rows[0][j] * _det(minor, zero)
        acc = acc + term if j % 2 == 0 else acc - term
    return acc


def kernel_fields(space: FormSpace, forms: Sequence[GradedPolynomial]) -> tuple[list[tuple], bool]:
    """Polynomial vector fields spanning ``ker(forms)`` where the forms are independent.

    Coordinates no form involves contribute ``d/dx^j`` directly. The rest
    come from a pivot block: an m x m minor, preferably a nonzero constant,
    with fraction-free cofactor vectors for each free column. Returns the
    fields and whether the pivot minor is constant (constant rank certified
    symbolically); otherwise rank is left to the sampling check.
    """
    zero = space.ctx.zero()
    m = len(forms)
    coeffs = [[space.interior(space.coordinate_field(j), w) for j in range(space.dim)] for w in forms]
    used = [j for j in range(space.dim) if any(not space.is_zero(coeffs[a][j]) for a in range(m))]
    fields = []
    for j in range(space.dim):
        if j not in used:
            fields.append(space.coordinate_field(j))
    if m == 0:
        return fields, True
    pivot = None
    fallback = None
    for cols in combinations(used, m):
        det = space.reduce(_det([[coeffs[a][c] for c in cols] for a in range(m)], zero))
        if det.is_zero():
            continue
        if det.constant_value() is not None:
            pivot = (cols, det)
            break
        if fallback is None:
            fallback = (cols, det)
    constant = pivot is not None
    pivot = pivot or fallback
    if pivot is None:
        raise ValueError("constraint one-forms are linearly dependent")
    cols, det = pivot
    dval = det.constant_value()
    for j in used:
        if j in cols:
            continue
        vec = [zero] * space.dim
        vec[j] = det
        for r, c in enumerate(cols):
            # Cramer: replace column r of the pivot block by -coeffs[:, j]
            block = [[(-coeffs[a][j] if k == r else coeffs[a][cc]) for k, cc in enumerate(cols)] for a in range(m)]
            vec[c] = _det(block, zero)
        if dval is not None:
            vec = [v.scale(1 / dval) for v in vec]
        fields.append(tuple(space.reduce(v) for v in vec))
    return fields, constant


def generators(spec) -> list[PontryaginSection]:
    """Spanning sections of the subbundle described by ``spec``."""
    space = _space_of(spec)
    if isinstance(spec, GraphOfForm):
        return [
            PontryaginSection(space, space.coordinate_field(i), space.interior(space.coordinate_field(i), spec.omega))
            for i in range(space.dim)
        ]
    if isinstance(spec, GraphOfBivector):
        pi = spec.bivector
        out = []
        for i in range(1, pi.n + 1):
            vec = tuple(space.poly(pi.entry(i, j)) for j in range(1, pi.n + 1))
            out.append(PontryaginSection(space, vec, space.ctx[space.diffs[i - 1]]))
        return out
    if isinstance(spec, FromDistribution):
        fields, _ = kernel_fields(space, spec.forms)
        zero_vec = tuple(space.ctx.zero() for _ in range(space.dim))
        return [PontryaginSection(space, f, space.ctx.zero()) for f in fields] + [
            PontryaginSection(space, zero_vec, w) for w in spec.forms
        ]
    raise TypeError(f"unsupported Dirac spec {type(spec).__name__}")


def _rank(rows: list[list[Fraction]]) -> int:
    rows = [list(r) for r in rows]
    rank = 0
    ncols = len(rows[0]) if rows else 0
    for col in range(ncols):
        piv = next((r for r in range(rank, len(rows)) if rows[r][col] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][col] != 0:
                f = rows[r][col] / rows[rank][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def _section_row(space: FormSpace, s: PontryaginSection, point) -> list[Fraction]:
    row = [c.evaluate(point) for c in s.vector]
    row += [space.interior(space.coordinate_field(j), s.form).evaluate(point) for j in range(space.dim)]
    return row


def isotropy_and_rank_check(spec, *, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED) -> Verdict:
    """Pairing vanishes on all generator pairs and rank is ``dim M`` at sample points.

    ``spec`` is a Dirac spec or an explicit list of sections.
    """
    gens = list(spec) if isinstance(spec, (list, tuple)) else generators(spec)
    if not gens:
        return Verdict(False, "not", reason="no generators")
    space = gens[0].space
    for i in range(len(gens)):
        for j in range(i, len(gens)):
            p = space.pairing(gens[i], gens[j])
            if not p.is_zero():
                return Verdict(False, "not", reason="pairing does not vanish", witness=p, where=(i, j))
    for point in space.sample_points(samples, seed):
        rank = _rank([_section_row(space, g, point) for g in gens])
        if rank != space.dim:
            return Verdict(False, "not", reason=f"rank {rank} != {space.dim}", witness=rank, where=point)
    return Verdict(True, "almost-Dirac")


def integrability_check(spec, *, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED) -> Verdict:
    """``Dirac`` if the subbundle is closed under the Courant-Dorfman bracket.

    Runs the isotropy check first and returns its verdict on failure.
    """
    iso = isotropy_and_rank_check(spec, samples=samples, seed=seed)
    if not iso:
        return iso
    space = _space_of(spec)
    if isinstance(spec, GraphOfForm):
        d_omega = space.d(spec.omega)
        if d_omega.is_zero():
            return Verdict(True, "Dirac")
        return Verdict(False, "almost-only", reason="omega is not closed", witness=d_omega)
    if isinstance(spec, GraphOfBivector):
        for triple, r in jacobi_residual(spec.bivector).items():
            if r:
                return Verdict(False, "almost-only", reason="Jacobi identity fails", witness=r, where=triple)
        return Verdict(True, "Dirac")
    if isinstance(spec, FromDistribution):
        fields, _ = kernel_fields(space, spec.forms)
        for (i, x), (j, y) in combinations(enumerate(fields), 2):
            br = space.lie_bracket(x, y)
            for a, w in enumerate(spec.forms):
                val = space.interior(br, w)
                if not val.is_zero():
                    return Verdict(
                        False,
                        "almost-only",
                        reason="distribution is not involutive",
                        witness=val,
                        where=(i, j, a),
                    )
        return Verdict(True, "Dirac")
    raise TypeError(f"unsupported Dirac spec {type(spec).__name__}")


def courant_closure_witness(sections: Sequence[PontryaginSection]):
    """First nonzero ``<[e_i, e_j], e_k>`` over generator triples, or ``None``."""
    space = sections[0].space
    for i, a in enumerate(sections):
        for j, b in enumerate(sections):
            br = space.courant(a, b)
            for k, c in enumerate(sections):
                val = space.pairing(br, c)
                if not val.is_zero():
                    return (i, j, k), val
    return None


# spec files --------------------------------------------------------------


def _parse_pair_line(line: str, lineno: int):
    lhs, sep, rhs = line.partition("=")
    if not sep:
        raise ParseError(f"line {lineno}: expected 'i j = <expression>'")
    idx = lhs.split()
    if len(idx) != 2 or not all(t.isdigit() for t in idx):
        raise ParseError(f"line {lineno}: expected two indices before '='")
    return int(idx[0]), int(idx[1]), rhs.strip()


def parse_dirac_spec(text: str):
    """Parse the sectioned Dirac spec format.

    ::

        [base] 3 x y theta      # dimension, optional coordinate names
        trigpair c s theta      # c = cos(theta), s = sin(theta)
        [distribution]
        1: s*dx - c*dy

    The structure section is one of ``[form]`` (``i j = f`` adds
    ``f dx^i ^ dx^j``), ``[bivector]`` (``i j = pi^{ij}``) or
    ``[distribution]`` (``a: <one-form in dx...>``). Indices are 1-based.
    """
    n = None
    names = None
    trig = []
    kind = None
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            head, _, rest = line.partition("]")
            section = head[1:].strip()
            if section == "base":
                parts = rest.split()
                if not parts or not parts[0].isdigit():
                    raise ParseError(f"line {lineno}: expected '[base] n [names...]'")
                n = int(parts[0])
                names = parts[1:] or [f"x{i}" for i in range(1, n + 1)]
                if len(names) != n:
                    raise ParseError(f"line {lineno}: {n} coordinates declared, {len(names)} names given")
            elif section in ("form", "bivector", "distribution"):
                if kind is not None:
                    raise ParseError(f"line {lineno}: only one structure section allowed")
                if rest.strip():
                    raise ParseError(f"line {lineno}: unexpected text after [{section}]")
                kind = section
            else:
                raise ParseError(f"line {lineno}: unknown section [{section}]")
            continue
        if n is None:
            raise ParseError(f"line {lineno}: [base] must come first")
        if kind is None:
            parts = line.split()
            if parts[0] == "trigpair":
                if len(parts) != 4:
                    raise ParseError(f"line {lineno}: expected 'trigpair c s angle'")
                trig.append((parts[1], parts[2], parts[3]))
                continue
            raise ParseError(f"line {lineno}: unexpected line before structure section")
        entries.append((lineno, line))
    if n is None or kind is None:
        raise ParseError("spec needs a [base] line and one structure section")
    space = FormSpace(names, trig)
    if kind == "form":
        omega = space.ctx.zero()
        for lineno, line in entries:
            i, j, expr = _parse_pair_line(line, lineno)
            if not (1 <= i <= n and 1 <= j <= n) or i == j:
                raise ParseError(f"line {lineno}: bad form index ({i}, {j})")
            omega = omega + space.ctx.parse(expr) * space.ctx[space.diffs[i - 1]] * space.ctx[space.diffs[j - 1]]
        return GraphOfForm(space, omega)
    if kind == "bivector":
        if trig:
            raise ParseError("trig pairs are not supported for bivectors")
        comps = {}
        base = GradedContext([(nm, 0) for nm in names])
        for lineno, line in entries:
            i, j, expr = _parse_pair_line(line, lineno)
            comps[(i, j)] = base.parse(expr)
        return GraphOfBivector(BivectorSpec(n, comps, names), space)
    forms = []
    for lineno, line in entries:
        label, sep, expr = line.partition(":")
        if not sep:
            raise ParseError(f"line {lineno}: expected 'a: <one-form>'")
        w = space.reduce(space.ctx.parse(expr))
        if w.is_zero() or w.degrees() != {1}:
            raise ParseError(f"line {lineno}: {expr.strip()!r} is not a nonzero one-form")
        forms.append(w)
    if not forms:
        raise ParseError("[distribution] needs at least one one-form")
    return FromDistribution(space, tuple(forms))


def load_dirac_spec(path: str | Path):
    return parse_dirac_spec(Path(path).read_text())
