"""Small symbolic expression trees for mechanical systems.

Leaves are named variables and exact rational constants; interior nodes are
sums, products, integer powers, ``sin`` and ``cos``. Trees are immutable and
closed under differentiation. They are evaluated by generating Python
source once and compiling it, either scalar-wise (``math`` functions, numba
friendly) or over numpy arrays.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ._parse import ParseError, parse

__all__ = [
    "Expr",
    "Const",
    "Var",
    "var",
    "const",
    "sin",
    "cos",
    "parse_expr",
    "gradient",
    "jacobian",
    "compile_vector",
    "compile_matrix",
    "compile_scalar",
]


class Expr:
    __slots__ = ("_hash",)

    # construction helpers ------------------------------------------------
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return mul(self, power(as_expr(other), -1))

    def __rtruediv__(self, other):
        return mul(as_expr(other), power(self, -1))

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("only integer powers are supported")
        return power(self, n)

    def __eq__(self, other):
        return isinstance(other, Expr) and self._key() == other._key()

    def __hash__(self):
        try:
            return self._hash
        except AttributeError:
            h = hash(self._key())
            object.__setattr__(self, "_hash", h)
            return h

    # interface -----------------------------------------------------------
    def _key(self):
        raise NotImplementedError

    def diff(self, name: str) -> Expr:
        raise NotImplementedError

    def subs(self, mapping: Mapping[str, Expr]) -> Expr:
        raise NotImplementedError

    def free_vars(self) -> frozenset[str]:
        raise NotImplementedError

    def source(self, names: Mapping[str, str], fn: str = "math") -> str:
        raise NotImplementedError

    def evaluate(self, env: Mapping[str, float]) -> float:
        """Slow tree-walking evaluation, for checks."""
        names = {v: f"_env[{v!r}]" for v in self.free_vars()}
        return eval(self.source(names), {"math": math, "_env": env})

    def __repr__(self):
        return f"Expr({self})"

    def __str__(self):
        return self.source({v: v for v in self.free_vars()}, fn="")


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        object.__setattr__(self, "value", Fraction(value))

    def __setattr__(self, *_):
        raise AttributeError("expressions are immutable")

    def _key(self):
        return ("c", self.value)

    def diff(self, name):
        return ZERO

    def subs(self, mapping):
        return self

    def free_vars(self):
        return frozenset()

    def source(self, names, fn="math"):
        v = self.value
        if fn == "":
            if v.denominator == 1:
                return f"({v})" if v < 0 else str(v)
            return f"({v})"
        text = repr(float(v))
        return f"({text})" if v < 0 else text


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)

    def __setattr__(self, *_):
        raise AttributeError("expressions are immutable")

    def _key(self):
        return ("v", self.name)

    def diff(self, name):
        return ONE if name == self.name else ZERO

    def subs(self, mapping):
        return mapping.get(self.name, self)

    def free_vars(self):
        return frozenset((self.name,))

    def source(self, names, fn="math"):
        return names[self.name]


class Add(Expr):
    __slots__ = ("args",)

    def __init__(self, args):
        object.__setattr__(self, "args", tuple(args))

    def __setattr__(self, *_):
        raise AttributeError("expressions are immutable")

    def _key(self):
        return ("+",) + tuple(a._key() for a in self.args)

    def diff(self, name):
        return add(*(a.diff(name) for a in self.args))

    def subs(self, mapping):
        return add(*(a.subs(mapping) for a in self.args))

    def free_vars(self):
        return frozenset().union(*(a.free_vars() for a in self.args))

    def source(self, names, fn="math"):
        return "(" + " + ".join(a.source(names, fn) for a in self.args) + ")"


class Mul(Expr):
    __slots__ = ("args",)

    def __init__(self, args):
        object.__setattr__(self, "args", tuple(args))

    def __setattr__(self, *_):
        raise AttributeError("expressions are immutable")

    def _key(self):
        return ("*",) + tuple(a._key() for a in self.args)

    def diff(self, name):
        terms = []
        for i, a in enumerate(self.args):
            da = a.diff(name)
            if da is ZERO or (isinstance(da, Const) and da.value == 0):
                continue
            terms.append(mul(*self.args[:i], da, *self.args[i + 1 :]))
        return add(*terms)

    def subs(self, mapping):
        return mul(*(a.subs(mapping) for a in self.args))

    def free_vars(self):
        return frozenset().union(*(a.free_vars() for a in self.args))

    def source(self, names, fn="math"):
        return "(" + " * ".join(a.source(names, fn) for a in self.args) + ")"


class Pow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base: Expr, exp: int):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exp", int(exp))

    def __setattr__(self, *_):
        raise AttributeError("expressions are immutable")

    def _key(self):
        return ("^", self.base._key(), self.exp)

    def diff(self, name):
        db = self.base.diff(name)
        if isinstance(db, Const) and db.value == 0:
            return ZERO
        return mul(Const(self.exp), power(self.base, self.exp - 1), db)

    def subs(self, mapping):
        return power(self.base.subs(mapping), self.exp)

    def free_vars(self):
        return self.base.free_vars()

    def source(self, names, fn="math"):
        b = self.base.source(names, fn)
        if fn == "":
            return f"{b}^{self.exp}"
        if self.exp > 0:
            return f"({b} ** {self.exp})"
        return f"(1.0 / ({b} ** {-self.exp}))"


class Func(Expr):
    __slots__ = ("func", "arg")
    _known = ("sin", "cos")

    def __init__(self, func: str, arg: Expr):
        if func not in self._known:
            raise ValueError(f"unsupported function {func!r}")
        object.__setattr__(self, "func", func)
        object.__setattr__(self, "arg", arg)

    def __setattr__(self, *_):
        raise AttributeError("expressions are immutable")

    def _key(self):
        return (self.func, self.arg._key())

    def diff(self, name):
        da = self.arg.diff(name)
        if isinstance(da, Const) and da.value == 0:
            return ZERO
        if self.func == "sin":
            return mul(cos(self.arg), da)
        return mul(Const(-1), sin(self.arg), da)

    def subs(self, mapping):
        a = self.arg.subs(mapping)
        return _fold(self.func, a) if isinstance(a, Const) else Func(self.func, a)

    def free_vars(self):
        return self.arg.free_vars()

    def source(self, names, fn="math"):
        prefix = f"{fn}." if fn else ""
        return f"{prefix}{self.func}({self.arg.source(names, fn)})"


ZERO = Const(0)
ONE = Const(1)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Const(x)
    if isinstance(x, float):
        return Const(Fraction(x))
    if isinstance(x, str):
        return Var(x)
    raise TypeError(f"cannot convert {x!r} to an expression")


def var(name: str) -> Var:
    return Var(name)


def const(value) -> Const:
    return Const(value)


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


def add(*args: Expr) -> Expr:
    flat = []
    total = Fraction(0)
    for a in args:
        items = a.args if isinstance(a, Add) else (a,)
        for t in items:
            if isinstance(t, Const):
                total += t.value
            else:
                flat.append(t)
    if total:
        flat.append(Const(total))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Add(flat)


def mul(*args: Expr) -> Expr:
    flat = []
    coeff = Fraction(1)
    for a in args:
        items = a.args if isinstance(a, Mul) else (a,)
        for t in items:
            if isinstance(t, Const):
                coeff *= t.value
            else:
                flat.append(t)
    if coeff == 0:
        return ZERO
    if coeff != 1:
        flat.insert(0, Const(coeff))
    if not flat:
        return ONE
    if len(flat) == 1:
        return flat[0]
    return Mul(flat)


def neg(a: Expr) -> Expr:
    return mul(Const(-1), a)


def power(base: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Const):
        if base.value == 0 and n < 0:
            raise ZeroDivisionError("zero to a negative power")
        return Const(base.value**n)
    if isinstance(base, Pow):
        return power(base.base, base.exp * n)
    return Pow(base, n)


def _fold(func: str, a: Const) -> Expr:
    if a.value == 0:
        return ZERO if func == "sin" else ONE
    return Func(func, a)


def sin(a) -> Expr:
    a = as_expr(a)
    return _fold("sin", a) if isinstance(a, Const) else Func("sin", a)


def cos(a) -> Expr:
    a = as_expr(a)
    return _fold("cos", a) if isinstance(a, Const) else Func("cos", a)


class _ExprBuilder:
    def __init__(self, allowed: Iterable[str] | None):
        self.allowed = None if allowed is None else frozenset(allowed)

    def number(self, value):
        return Const(value)

    def name(self, ident):
        if self.allowed is not None and ident not in self.allowed:
            raise ParseError(f"unknown identifier {ident!r}")
        return Var(ident)

    def call(self, func, arg):
        return sin(arg) if func == "sin" else cos(arg)

    def add(self, a, b):
        return add(a, b)

    def sub(self, a, b):
        return add(a, neg(b))

    def mul(self, a, b):
        return mul(a, b)

    def div(self, a, b):
        return mul(a, power(b, -1))

    def neg(self, a):
        return neg(a)

    def pow(self, a, n):
        return power(a, n)


def parse_expr(text: str, variables: Iterable[str] | None = None) -> Expr:
    """Parse the expression grammar extended with decimals, ``/``, ``sin`` and ``cos``."""
    return parse(text, _ExprBuilder(variables), decimals=True, functions={"sin", "cos"})


def gradient(e: Expr, variables: Sequence[str]) -> list[Expr]:
    return [e.diff(v) for v in variables]


def jacobian(exprs: Sequence[Expr], variables: Sequence[str]) -> list[list[Expr]]:
    return [[e.diff(v) for v in variables] for e in exprs]


# code generation ---------------------------------------------------------

Layout = Sequence[tuple[str, Sequence[str] | None]]


def _header(layout: Layout, vectorized: bool):
    """Argument list and the local-name binding lines for a layout.

    Each layout entry is ``(argname, variable names)`` for an array argument
    or ``(name, None)`` for a scalar argument bound to variable ``name``.
    """
    args = []
    lines = []
    names = {}
    counter = 0
    for argname, varnames in layout:
        args.append(argname)
        if varnames is None:
            names[argname] = argname
            continue
        for i, v in enumerate(varnames):
            local = f"_v{counter}"
            counter += 1
            idx = f"[..., {i}]" if vectorized else f"[{i}]"
            lines.append(f"    {local} = {argname}{idx}")
            names[v] = local
    return args, lines, names


def _build(src: str, fname: str) -> Callable:
    ns = {"math": math, "np": np}
    exec(compile(src, f"<generated {fname}>", "exec"), ns)
    fn = ns[fname]
    fn.__source__ = src
    return fn


def _check_free(exprs: Iterable[Expr], names: Mapping[str, str]):
    missing = set()
    for e in exprs:
        missing |= e.free_vars() - names.keys()
    if missing:
        raise ValueError(f"expression uses variables outside the layout: {sorted(missing)}")


def compile_scalar(e: Expr, layout: Layout, *, vectorized: bool = False, name: str = "scalar_fn") -> Callable:
    """Compile to ``f(*args) -> float``; with ``vectorized`` the array
    arguments may carry leading sample axes and ``np`` functions are used."""
    args, lines, names = _header(layout, vectorized)
    _check_free([e], names)
    body = e.source(names, "np" if vectorized else "math")
    src = f"def {name}({', '.join(args)}):\n" + "\n".join(lines) + ("\n" if lines else "")
    src += f"    return {body}\n"
    return _build(src, name)


def compile_vector(exprs: Sequence[Expr], layout: Layout, *, name: str = "vector_fn") -> Callable:
    """Compile to ``f(*args) -> ndarray`` of shape ``(len(exprs),)``."""
    args, lines, names = _header(layout, False)
    _check_free(exprs, names)
    src = f"def {name}({', '.join(args)}):\n" + "\n".join(lines) + ("\n" if lines else "")
    src += f"    out = np.empty({len(exprs)})\n"
    for i, e in enumerate(exprs):
        src += f"    out[{i}] = {e.source(names)}\n"
    src += "    return out\n"
    return _build(src, name)


def compile_matrix(rows: Sequence[Sequence[Expr]], layout: Layout, *, ncols: int | None = None, name: str = "matrix_fn") -> Callable:
    """Compile to ``f(*args) -> ndarray`` of shape ``(len(rows), ncols)``."""
    args, lines, names = _header(layout, False)
    _check_free([e for r in rows for e in r], names)
    nr = len(rows)
    nc = ncols if ncols is not None else (len(rows[0]) if rows else 0)
    src = f"def {name}({', '.join(args)}):\n" + "\n".join(lines) + ("\n" if lines else "")
    src += f"    out = np.zeros(({nr}, {nc}))\n"
    for i, r in enumerate(rows):
        for j, e in enumerate(r):
            if not (isinstance(e, Const) and e.value == 0):
                src += f"    out[{i}, {j}] = {e.source(names)}\n"
    src += "    return out\n"
    return _build(src, name)
