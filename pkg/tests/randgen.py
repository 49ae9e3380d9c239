"""Seeded random generators for graded objects, shared by property and
acceptance tests. Every function takes a ``random.Random``."""

from __future__ import annotations

import random
from fractions import Fraction
from itertools import product

from gradedmech.dirac import FormSpace
from gradedmech.graded import BivectorSpec, GradedContext, GradedPolynomial, GradedVectorField

DEGREE_POOL = (0, 0, 1, 1, 2, 3)


def context(rng: random.Random, max_coords: int = 4) -> GradedContext:
    k = rng.randint(2, max_coords)
    return GradedContext([(f"c{i}", rng.choice(DEGREE_POOL)) for i in range(k)])


def monomials_by_degree(ctx: GradedContext, max_deg: int = 3) -> dict[int, list[tuple[int, ...]]]:
    bounds = [1 if d % 2 else (max_deg if d == 0 else max_deg // d) for d in ctx.degrees]
    out: dict[int, list] = {}
    for mono in product(*(range(b + 1) for b in bounds)):
        deg = sum(e * d for e, d in zip(mono, ctx.degrees))
        if deg <= max_deg and (sum(mono) <= max_deg):
            out.setdefault(deg, []).append(mono)
    return out


def coefficient(rng: random.Random) -> Fraction:
    return Fraction(rng.choice([-3, -2, -1, 1, 1, 2, 3, 5]), rng.choice([1, 1, 1, 2, 3]))


def homogeneous(rng: random.Random, ctx: GradedContext, degree: int | None = None, max_deg: int = 3, terms: int = 3) -> GradedPolynomial:
    table = monomials_by_degree(ctx, max_deg)
    if degree is None:
        degree = rng.choice(sorted(table))
    pool = table.get(degree, [])
    if not pool:
        return ctx.zero()
    chosen = {}
    for _ in range(rng.randint(1, terms)):
        chosen[rng.choice(pool)] = coefficient(rng)
    # odd squares are already excluded by the exponent bounds
    return GradedPolynomial(ctx, chosen)


def vector_field(rng: random.Random, ctx: GradedContext, degree: int | None = None, max_deg: int = 3) -> GradedVectorField:
    if degree is None:
        degree = rng.choice([-1, 0, 1, 2])
    comps = {}
    for name, d in zip(ctx.names, ctx.degrees):
        target = d + degree
        if target < 0 or rng.random() < 0.3:
            continue
        p = homogeneous(rng, ctx, target, max_deg=max(max_deg, target), terms=2)
        if p:
            comps[name] = p
    return GradedVectorField(ctx, comps, degree)


def base_polynomial(rng: random.Random, ctx: GradedContext, names, max_deg: int = 2, terms: int = 2) -> GradedPolynomial:
    """Random polynomial in the given degree-0 coordinates."""
    out = ctx.zero()
    for _ in range(rng.randint(1, terms)):
        term = ctx.constant(coefficient(rng))
        for _ in range(rng.randint(0, max_deg)):
            term = term * ctx[rng.choice(names)]
        out = out + term
    return out


def bivector(rng: random.Random, max_deg: int = 2) -> BivectorSpec:
    """Mix of Poisson families and generic bivectors (n <= 4, degree <= 2).

    Families: constant; any planar ``pi^{12}``; a single ``f d_i ^ d_j``;
    rescaled so(3); and generic components, which are rarely Poisson.
    """
    family = rng.choice(["constant", "planar", "single", "lie", "generic", "generic"])
    n = {"planar": 2, "lie": rng.randint(3, 4), "generic": rng.randint(3, 4)}.get(family, rng.randint(2, 4))
    base = GradedContext([(f"x{i}", 0) for i in range(1, n + 1)])
    xs = list(base.names)
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    comps = {}
    if family == "constant":
        comps = {ij: coefficient(rng) for ij in pairs if rng.random() < 0.6}
    elif family == "planar":
        comps = {(1, 2): base_polynomial(rng, base, xs, max_deg)}
    elif family == "single":
        comps = {rng.choice(pairs): base_polynomial(rng, base, xs, max_deg)}
    elif family == "lie":
        c = base.constant(coefficient(rng))
        comps = {(1, 2): c * base["x3"], (2, 3): c * base["x1"], (1, 3): -(c * base["x2"])}
    else:
        comps = {ij: base_polynomial(rng, base, xs, max_deg, terms=3) for ij in pairs if rng.random() < 0.8}
    return BivectorSpec(n, comps, xs)


def form(rng: random.Random, space: FormSpace, degree: int, terms: int = 3, max_coeff_deg: int = 2) -> GradedPolynomial:
    ctx = space.ctx
    out = ctx.zero()
    for _ in range(rng.randint(1, terms)):
        term = base_polynomial(rng, ctx, list(space.names), max_coeff_deg, terms=1)
        for d in sorted(rng.sample(space.diffs, degree)):
            term = term * ctx[d]
        out = out + term
    return out


def base_vector(rng: random.Random, space: FormSpace, max_deg: int = 2):
    return tuple(
        base_polynomial(rng, space.ctx, list(space.names), max_deg) if rng.random() < 0.8 else space.ctx.zero()
        for _ in range(space.dim)
    )
