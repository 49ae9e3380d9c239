"""Exact polynomial algebra over non-negatively graded coordinates.

Coordinates carry integer degrees and commute up to the Koszul sign
``x y = (-1)^(|x||y|) y x``.  Polynomials have exact rational coefficients
and are stored in a normal form: each monomial is an exponent tuple in
context order, so two polynomials are equal iff their term maps are.

All derivatives are *left* derivatives: differentiating a monomial in an
odd coordinate first moves that coordinate to the front, picking up one
sign per odd factor it passes.

On top of the algebra sit derivations (graded vector fields), their graded
commutator, the Q-structure test ``[Q, Q] = 0`` and the two standard
examples: the de Rham field on ``T[1]R^d`` and the field ``Q_pi`` built from
a bivector on ``T*[1]M``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from ._parse import ParseError, parse

__all__ = [
    "GradedContext",
    "GradedPolynomial",
    "GradedVectorField",
    "BivectorSpec",
    "Verdict",
    "ContextMismatch",
    "parse_polynomial",
    "multiply",
    "partial_derivative",
    "apply_vector_field",
    "commutator",
    "is_q_structure",
    "de_rham_q",
    "cotangent_context",
    "bivector_to_q",
    "jacobi_residual",
    "cotangent_lift",
    "poisson_preservation_check",
]

Number = Union[int, Fraction]


class ContextMismatch(ValueError):
    """Operands live on different graded contexts."""


@dataclass(frozen=True)
class Verdict:
    """Outcome of a structure check.

    ``witness`` carries whatever explains a failure: a polynomial, a dict of
    components, a form. Truthiness follows ``ok``.
    """

    ok: bool
    label: str
    reason: str = ""
    witness: object = None
    where: object = None

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class GradedContext:
    """An ordered chart of graded coordinates ``(name, degree)``."""

    coordinates: tuple[tuple[str, int], ...]
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __init__(self, coordinates: Iterable[tuple[str, int]]):
        coords = tuple((str(n), int(d)) for n, d in coordinates)
        names = [n for n, _ in coords]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate coordinate names in {names}")
        for n, d in coords:
            if d < 0:
                raise ValueError(f"coordinate {n!r} has negative degree {d}")
            if not n[:1].isalpha() or not n.replace("_", "a").isalnum():
                raise ValueError(f"invalid coordinate name {n!r}")
        object.__setattr__(self, "coordinates", coords)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @classmethod
    def from_text(cls, text: str) -> GradedContext:
        """Read ``name degree`` lines; blank lines and ``#`` comments are skipped."""
        coords = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"line {lineno}: expected 'name degree', got {raw!r}")
            try:
                coords.append((parts[0], int(parts[1])))
            except ValueError:
                raise ParseError(f"line {lineno}: degree must be an integer") from None
        return cls(coords)

    @classmethod
    def from_file(cls, path: str | Path) -> GradedContext:
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        return "".join(f"{n} {d}\n" for n, d in self.coordinates)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.coordinates)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.coordinates)

    def __len__(self) -> int:
        return len(self.coordinates)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown coordinate {name!r}") from None

    def degree(self, name: str) -> int:
        return self.coordinates[self.index(name)][1]

    def odd(self) -> tuple[bool, ...]:
        return tuple(d % 2 == 1 for _, d in self.coordinates)

    def zero(self) -> GradedPolynomial:
        return GradedPolynomial(self, {})

    def one(self) -> GradedPolynomial:
        return self.constant(1)

    def constant(self, c: Number) -> GradedPolynomial:
        return GradedPolynomial(self, {(0,) * len(self): Fraction(c)})

    def coordinate(self, name: str) -> GradedPolynomial:
        e = [0] * len(self)
        e[self.index(name)] = 1
        return GradedPolynomial(self, {tuple(e): Fraction(1)})

    def __getitem__(self, name: str) -> GradedPolynomial:
        return self.coordinate(name)

    def parse(self, text: str) -> GradedPolynomial:
        return parse_polynomial(self, text)


class GradedPolynomial:
    """Immutable polynomial in normal form; see the module docstring."""

    __slots__ = ("ctx", "_terms", "_hash")

    def __init__(self, ctx: GradedContext, terms: Mapping[tuple[int, ...], Number]):
        n = len(ctx)
        odd = ctx.odd()
        clean = {}
        for mono, c in terms.items():
            if len(mono) != n:
                raise ValueError("monomial length does not match context")
            if any(e < 0 for e in mono):
                raise ValueError("negative exponent")
            if any(o and e > 1 for o, e in zip(odd, mono)):
                continue  # odd square vanishes
            c = Fraction(c)
            if c:
                clean[tuple(mono)] = c
        self.ctx = ctx
        self._terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, ctx: GradedContext, terms: dict) -> GradedPolynomial:
        # terms already normal and free of zero coefficients
        obj = cls.__new__(cls)
        obj.ctx = ctx
        obj._terms = terms
        obj._hash = None
        return obj

    @property
    def terms(self) -> dict[tuple[int, ...], Fraction]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def monomial_degree(self, mono: tuple[int, ...]) -> int:
        return sum(e * d for e, d in zip(mono, self.ctx.degrees))

    def degrees(self) -> set[int]:
        return {self.monomial_degree(m) for m in self._terms}

    def is_homogeneous(self) -> bool:
        return len(self.degrees()) <= 1

    @property
    def degree(self) -> int | None:
        """Degree of a homogeneous polynomial; ``None`` for zero."""
        degs = self.degrees()
        if not degs:
            return None
        if len(degs) > 1:
            raise ValueError(f"polynomial is not homogeneous (degrees {sorted(degs)})")
        return degs.pop()

    def constant_value(self) -> Fraction | None:
        """The value if the polynomial is constant, else ``None``."""
        if not self._terms:
            return Fraction(0)
        if len(self._terms) == 1:
            mono, c = next(iter(self._terms.items()))
            if not any(mono):
                return c
        return None

    def variables(self) -> set[str]:
        names = self.ctx.names
        return {names[i] for m in self._terms for i, e in enumerate(m) if e}

    def _check(self, other: GradedPolynomial) -> None:
        if self.ctx != other.ctx:
            raise ContextMismatch("polynomials belong to different contexts")

    def _coerce(self, other) -> GradedPolynomial:
        if isinstance(other, GradedPolynomial):
            self._check(other)
            return other
        if isinstance(other, (int, Fraction)):
            return self.ctx.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            v = out.get(m, 0) + c
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        return GradedPolynomial._raw(self.ctx, out)

    __radd__ = __add__

    def __neg__(self):
        return GradedPolynomial._raw(self.ctx, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def scale(self, c: Number) -> GradedPolynomial:
        c = Fraction(c)
        if not c:
            return self.ctx.zero()
        return GradedPolynomial._raw(self.ctx, {m: c * v for m, v in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        if not isinstance(other, GradedPolynomial):
            return NotImplemented
        return multiply(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(1 / Fraction(other))
        return NotImplemented

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers")
        result = self.ctx.one()
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = self.ctx.constant(other)
        if not isinstance(other, GradedPolynomial):
            return NotImplemented
        return self.ctx == other.ctx and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.ctx, frozenset(self._terms.items())))
        return self._hash

    def partial(self, coord: str) -> GradedPolynomial:
        return partial_derivative(self, coord)

    def embed(self, ctx: GradedContext) -> GradedPolynomial:
        """Re-express in a context that contains every coordinate used here.

        Coordinates must keep their degree, and the relative order of odd
        coordinates in use must be preserved (no sign is introduced).
        """
        if ctx == self.ctx:
            return self
        names = self.ctx.names
        mapping = []
        for i, name in enumerate(names):
            if name in ctx:
                if ctx.degree(name) != self.ctx.degrees[i]:
                    raise ContextMismatch(f"degree of {name!r} differs between contexts")
                mapping.append(ctx.index(name))
            else:
                mapping.append(None)
        odd_pos = [mapping[i] for i, o in enumerate(self.ctx.odd()) if o and mapping[i] is not None]
        if odd_pos != sorted(odd_pos):
            raise ContextMismatch("embedding would reorder odd coordinates")
        out = {}
        for mono, c in self._terms.items():
            e = [0] * len(ctx)
            for i, k in enumerate(mono):
                if k:
                    if mapping[i] is None:
                        raise ContextMismatch(f"coordinate {names[i]!r} missing from target context")
                    e[mapping[i]] = k
            out[tuple(e)] = c
        return GradedPolynomial._raw(ctx, out)

    def evaluate(self, point: Mapping[str, Number]):
        """Substitute values for even coordinates.

        Returns a number if every coordinate in use is assigned, otherwise
        a polynomial in the remaining coordinates. Odd coordinates cannot be
        assigned numbers.
        """
        idx = {}
        for name, val in point.items():
            i = self.ctx.index(name)
            if self.ctx.degrees[i] % 2:
                raise ValueError(f"cannot assign a number to odd coordinate {name!r}")
            idx[i] = val
        out: dict = {}
        for mono, c in self._terms.items():
            v = c
            e = list(mono)
            for i, val in idx.items():
                if e[i]:
                    v = v * val ** e[i]
                    e[i] = 0
            if v:
                key = tuple(e)
                s = out.get(key, 0) + v
                if s:
                    out[key] = s
                else:
                    out.pop(key, None)
        if all(not any(m) for m in out):
            return out.get((0,) * len(self.ctx), Fraction(0))
        return GradedPolynomial(self.ctx, out)

    def sort_key(self, mono):
        return (self.monomial_degree(mono), sum(mono), tuple(-e for e in mono))

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        names = self.ctx.names
        parts = []
        for mono in sorted(self._terms, key=self.sort_key):
            c = self._terms[mono]
            factors = []
            for name, e in zip(names, mono):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            mag = abs(c)
            sign = "-" if c < 0 else "+"
            if not factors:
                body = str(mag)
            elif mag == 1:
                body = "*".join(factors)
            else:
                body = f"{mag}*" + "*".join(factors)
            parts.append((sign, body))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def __repr__(self) -> str:
        return f"GradedPolynomial({str(self)!r})"


def _mono_product(odd, a, b):
    """Product of two normal-form monomials: (sign, monomial) or None if zero."""
    swaps = 0
    odd_in_b_before = 0
    for i, o in enumerate(odd):
        if o:
            if a[i] and b[i]:
                return None
            # odd factor of a at i passes every odd factor of b sitting before i
            if a[i]:
                swaps += odd_in_b_before
            odd_in_b_before += b[i]
    mono = tuple(x + y for x, y in zip(a, b))
    return (-1 if swaps & 1 else 1), mono


def multiply(f: GradedPolynomial, g: GradedPolynomial) -> GradedPolynomial:
    """Graded-commutative product, normalized to context order."""
    f._check(g)
    odd = f.ctx.odd()
    out: dict = {}
    for ma, ca in f._terms.items():
        for mb, cb in g._terms.items():
            r = _mono_product(odd, ma, mb)
            if r is None:
                continue
            sign, mono = r
            v = out.get(mono, 0) + sign * ca * cb
            if v:
                out[mono] = v
            else:
                out.pop(mono, None)
    return GradedPolynomial._raw(f.ctx, out)


def partial_derivative(f: GradedPolynomial, coord: str) -> GradedPolynomial:
    """Left derivative ``d f / d coord``."""
    ctx = f.ctx
    k = ctx.index(coord)
    odd = ctx.odd()
    out: dict = {}
    for mono, c in f._terms.items():
        e = mono[k]
        if not e:
            continue
        coeff = c * e
        if odd[k] and sum(mono[i] for i in range(k) if odd[i]) % 2:
            coeff = -coeff
        m = list(mono)
        m[k] -= 1
        m = tuple(m)
        v = out.get(m, 0) + coeff
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return GradedPolynomial._raw(ctx, out)


class _PolyBuilder:
    def __init__(self, ctx: GradedContext):
        self.ctx = ctx

    def number(self, value):
        return self.ctx.constant(value)

    def name(self, ident):
        if ident not in self.ctx:
            raise ParseError(f"unknown identifier {ident!r}")
        return self.ctx.coordinate(ident)

    def call(self, func, arg):  # pragma: no cover - no functions registered
        raise ParseError(f"functions are not allowed in polynomials ({func})")

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def mul(self, a, b):
        return multiply(a, b)

    def div(self, a, b):
        c = b.constant_value()
        if c is None or c == 0:
            raise ParseError("division is only allowed by a nonzero constant")
        return a.scale(1 / c)

    def neg(self, a):
        return -a

    def pow(self, a, n):
        if n < 0:
            raise ParseError("negative exponent in polynomial")
        return a**n


def parse_polynomial(ctx: GradedContext, text: str) -> GradedPolynomial:
    """Parse ``text`` into normal form on ``ctx``."""
    return parse(text, _PolyBuilder(ctx))


def _as_poly(ctx: GradedContext, value) -> GradedPolynomial:
    if isinstance(value, GradedPolynomial):
        if value.ctx != ctx:
            return value.embed(ctx)
        return value
    if isinstance(value, str):
        return parse_polynomial(ctx, value)
    if isinstance(value, (int, Fraction)):
        return ctx.constant(value)
    raise TypeError(f"cannot interpret {value!r} as a polynomial")


class GradedVectorField:
    """Homogeneous derivation ``sum_i v^i d/dx^i`` with left derivatives.

    ``components`` maps coordinate names to polynomials (or parseable
    strings). The degree is inferred from the components when not given;
    every nonzero component must satisfy ``deg v^i - deg x^i = degree``.
    """

    __slots__ = ("ctx", "_comps", "degree")

    def __init__(self, ctx: GradedContext, components: Mapping[str, object], degree: int | None = None):
        comps = {}
        for name, value in components.items():
            ctx.index(name)
            p = _as_poly(ctx, value)
            if p:
                comps[name] = p
        inferred = set()
        for name, p in comps.items():
            if not p.is_homogeneous():
                raise ValueError(f"component {name!r} is not homogeneous")
            inferred.add(p.degree - ctx.degree(name))
        if len(inferred) > 1:
            raise ValueError(f"components have inconsistent degrees {sorted(inferred)}")
        if degree is None:
            degree = inferred.pop() if inferred else 0
        elif inferred and inferred != {degree}:
            raise ValueError(f"declared degree {degree} but components have degree {inferred.pop()}")
        self.ctx = ctx
        self._comps = {n: comps[n] for n in ctx.names if n in comps}
        self.degree = int(degree)

    @property
    def components(self) -> dict[str, GradedPolynomial]:
        return dict(self._comps)

    def component(self, name: str) -> GradedPolynomial:
        self.ctx.index(name)
        return self._comps.get(name, self.ctx.zero())

    def is_zero(self) -> bool:
        return not self._comps

    def __call__(self, f: GradedPolynomial) -> GradedPolynomial:
        return apply_vector_field(self, f)

    def __eq__(self, other):
        if not isinstance(other, GradedVectorField):
            return NotImplemented
        return self.ctx == other.ctx and self._comps == other._comps and (
            self.degree == other.degree or self.is_zero()
        )

    def __hash__(self):
        return hash((self.ctx, tuple(self._comps.items())))

    def _combine(self, other: GradedVectorField, sign: int) -> GradedVectorField:
        if self.ctx != other.ctx:
            raise ContextMismatch("vector fields belong to different contexts")
        if self.degree != other.degree and not (self.is_zero() or other.is_zero()):
            raise ValueError("cannot add vector fields of different degrees")
        degree = other.degree if self.is_zero() else self.degree
        comps = dict(self._comps)
        for n, p in other._comps.items():
            comps[n] = comps.get(n, self.ctx.zero()) + (p if sign > 0 else -p)
        return GradedVectorField(self.ctx, comps, degree)

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return GradedVectorField(self.ctx, {n: -p for n, p in self._comps.items()}, self.degree)

    def scale(self, c: Number) -> GradedVectorField:
        return GradedVectorField(self.ctx, {n: p.scale(c) for n, p in self._comps.items()}, self.degree)

    def __str__(self) -> str:
        if not self._comps:
            return "0"
        return " + ".join(f"({p})*d/d{n}" for n, p in self._comps.items())

    def __repr__(self) -> str:
        return f"GradedVectorField(degree={self.degree}, {self})"


def apply_vector_field(v: GradedVectorField, f: GradedPolynomial) -> GradedPolynomial:
    """``v(f) = sum_i v^i * (left d f / d x^i)``."""
    if v.ctx != f.ctx:
        raise ContextMismatch("vector field and polynomial belong to different contexts")
    out = f.ctx.zero()
    for name, comp in v._comps.items():
        d = partial_derivative(f, name)
        if d:
            out = out + multiply(comp, d)
    return out


def commutator(v: GradedVectorField, w: GradedVectorField) -> GradedVectorField:
    """Graded commutator ``[v, w] = v w - (-1)^(|v||w|) w v``."""
    if v.ctx != w.ctx:
        raise ContextMismatch("vector fields belong to different contexts")
    sign = -1 if (v.degree * w.degree) % 2 else 1
    comps = {}
    for name in v.ctx.names:
        c = apply_vector_field(v, w.component(name))
        c2 = apply_vector_field(w, v.component(name))
        c = c + c2 if sign < 0 else c - c2
        if c:
            comps[name] = c
    return GradedVectorField(v.ctx, comps, v.degree + w.degree)


def is_q_structure(v: GradedVectorField) -> Verdict:
    """Degree 1 and ``[v, v] = 0``; on failure the witness is the first
    nonzero component of ``1/2 [v, v]`` in context order."""
    if v.degree != 1:
        return Verdict(False, "no", reason="degree", witness=v.degree)
    sq = commutator(v, v)
    for name in v.ctx.names:
        c = sq.component(name)
        if c:
            return Verdict(False, "no", reason="not self-commuting", witness=c.scale(Fraction(1, 2)), where=name)
    return Verdict(True, "yes")


def de_rham_q(dim: int) -> tuple[GradedContext, GradedVectorField]:
    """``T[1]R^dim`` with coordinates ``sigma_mu`` (deg 0), ``theta_mu`` (deg 1)
    and the field ``Q = sum theta_mu d/dsigma_mu``."""
    if dim < 1:
        raise ValueError("dimension must be positive")
    coords = [(f"sigma{m}", 0) for m in range(1, dim + 1)]
    coords += [(f"theta{m}", 1) for m in range(1, dim + 1)]
    ctx = GradedContext(coords)
    q = GradedVectorField(ctx, {f"sigma{m}": ctx[f"theta{m}"] for m in range(1, dim + 1)}, 1)
    return ctx, q


def _momentum_names(base_names: Sequence[str]) -> list[str]:
    default = all(n == f"x{i}" for i, n in enumerate(base_names, 1))
    return [f"p{i}" if default else f"p_{n}" for i, n in enumerate(base_names, 1)]


def cotangent_context(base: GradedContext) -> GradedContext:
    """``T*[1]M`` over a base of degree-0 coordinates: adds momenta of degree 1.

    Base ``x1..xn`` gets momenta ``p1..pn``; other names ``q`` get ``p_q``.
    """
    if any(d for d in base.degrees):
        raise ValueError("base coordinates must have degree 0")
    names = base.names
    return GradedContext(list(base.coordinates) + [(p, 1) for p in _momentum_names(names)])


class BivectorSpec:
    """Antisymmetric bivector ``pi^{ij}(x)`` on a base of degree-0 coordinates.

    Indices are 1-based to match the usual ``pi^{12}`` notation; only
    ``i < j`` is stored, ``pi^{ji} = -pi^{ij}`` and ``pi^{ii} = 0``.
    """

    def __init__(
        self,
        n: int,
        components: Mapping[tuple[int, int], object] | None = None,
        names: Sequence[str] | None = None,
    ):
        if n < 1:
            raise ValueError("dimension must be positive")
        names = list(names) if names is not None else [f"x{i}" for i in range(1, n + 1)]
        if len(names) != n:
            raise ValueError("need one coordinate name per dimension")
        self.n = n
        self.base = GradedContext([(nm, 0) for nm in names])
        comps = {}
        for (i, j), value in (components or {}).items():
            if not (1 <= i <= n and 1 <= j <= n) or i == j:
                raise ValueError(f"bad bivector index ({i}, {j}) for n={n}")
            p = _as_poly(self.base, value)
            if i > j:
                i, j, p = j, i, -p
            if (i, j) in comps:
                raise ValueError(f"component ({i}, {j}) given twice")
            if p:
                comps[(i, j)] = p
        self._comps = comps

    @property
    def components(self) -> dict[tuple[int, int], GradedPolynomial]:
        return dict(self._comps)

    def entry(self, i: int, j: int) -> GradedPolynomial:
        if i == j:
            return self.base.zero()
        if i < j:
            return self._comps.get((i, j), self.base.zero())
        return -self._comps.get((j, i), self.base.zero())

    def __repr__(self) -> str:
        body = ", ".join(f"{k}: {v}" for k, v in sorted(self._comps.items()))
        return f"BivectorSpec(n={self.n}, {{{body}}})"


def bivector_to_q(pi: BivectorSpec) -> tuple[GradedContext, GradedVectorField]:
    """Hamiltonian field of ``H = 1/2 pi^{ij} p_i p_j`` on ``T*[1]M``.

    For vector fields acting from the right this is the familiar
    ``pi^{ij} p_j d/dx^i - 1/2 (d_i pi^{jk}) p_j p_k d/dp_i``. Every
    derivation here acts from the left, which flips the relative sign of the
    momentum part::

        Q_pi = pi^{ij} p_j d/dx^i + 1/2 (d_i pi^{jk}) p_j p_k d/dp_i

    With this sign ``Q_pi^2 = 0`` exactly when ``pi`` satisfies Jacobi.
    """
    ctx = cotangent_context(pi.base)
    n = pi.n
    xs = pi.base.names
    ps = ctx.names[n:]
    P = [ctx[p] for p in ps]
    full = [[pi.entry(i, j).embed(ctx) for j in range(1, n + 1)] for i in range(1, n + 1)]
    comps = {}
    for i in range(n):
        comps[xs[i]] = sum((full[i][j] * P[j] for j in range(n)), ctx.zero())
        acc = ctx.zero()
        for j in range(n):
            for k in range(n):
                d = full[j][k].partial(xs[i])
                if d:
                    acc = acc + d * P[j] * P[k]
        comps[ps[i]] = acc.scale(Fraction(1, 2))
    return ctx, GradedVectorField(ctx, comps, 1)


def jacobi_residual(pi: BivectorSpec) -> dict[tuple[int, int, int], GradedPolynomial]:
    """Component Jacobiator for every ``i < j < k`` (1-based):

    ``sum_l d_l pi^{ij} pi^{lk} + d_l pi^{ki} pi^{lj} + d_l pi^{jk} pi^{li}``.
    """
    n = pi.n
    xs = pi.base.names
    e = pi.entry
    out = {}
    for i, j, k in combinations(range(1, n + 1), 3):
        acc = pi.base.zero()
        for l in range(1, n + 1):
            x = xs[l - 1]
            acc = acc + e(i, j).partial(x) * e(l, k) + e(k, i).partial(x) * e(l, j) + e(j, k).partial(x) * e(l, i)
        out[(i, j, k)] = acc
    return out


def cotangent_lift(X: Sequence[object], base: GradedContext | None = None) -> GradedVectorField:
    """Lift ``X = X^i d/dx^i`` to ``X^i d/dx^i - (d_i X^j) p_j d/dp_i``.

    ``X`` is a sequence of component polynomials (or strings) on ``base``;
    the default base is ``x1..xn`` with ``n = len(X)``.
    """
    if base is None:
        base = GradedContext([(f"x{i}", 0) for i in range(1, len(X) + 1)])
    if len(X) != len(base):
        raise ValueError(f"vector field has {len(X)} components, base dimension is {len(base)}")
    ctx = cotangent_context(base)
    n = len(base)
    xs = base.names
    ps = ctx.names[n:]
    comps_x = [_as_poly(base, c) for c in X]
    for c in comps_x:
        if c.degrees() - {0}:
            raise ValueError("base vector field components must have degree 0")
    comps = {}
    for i in range(n):
        comps[xs[i]] = comps_x[i].embed(ctx)
        acc = ctx.zero()
        for j in range(n):
            d = comps_x[j].partial(xs[i])
            if d:
                acc = acc - d.embed(ctx) * ctx[ps[j]]
        comps[ps[i]] = acc
    return GradedVectorField(ctx, comps, 0)


def poisson_preservation_check(X: Sequence[object], pi: BivectorSpec) -> Verdict:
    """``yes`` iff the cotangent lift of ``X`` commutes with ``Q_pi``."""
    ctx, q = bivector_to_q(pi)
    lift = cotangent_lift(X, pi.base)
    c = commutator(lift, q)
    if c.is_zero():
        return Verdict(True, "yes")
    return Verdict(False, "no", reason="lift does not commute with Q_pi", witness=c.components)
