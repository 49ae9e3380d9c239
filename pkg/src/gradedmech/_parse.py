"""Recursive-descent parser for the shared infix expression grammar.

Identifiers match ``[a-zA-Z][a-zA-Z0-9_]*``; literals are integers, and
``a/b`` rationals fall out of ordinary division. Precedence, tightest first:
``^`` (integer exponent only), then ``*`` and ``/``, then ``+`` and ``-``.
Whitespace is insignificant.

The parser does not build a tree of its own. It drives a *builder* object,
so the same grammar produces graded polynomials and numeric expression
trees alike.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Any, Protocol

__all__ = ["ParseError", "Builder", "parse"]


class ParseError(ValueError):
    """Malformed input text, unknown identifier or bad exponent."""

    def __init__(self, message: str, text: str = "", pos: int | None = None):
        if pos is not None:
            message = f"{message} at column {pos + 1} in {text!r}"
        super().__init__(message)
        self.pos = pos


class Builder(Protocol):
    def number(self, value: Fraction) -> Any: ...
    def name(self, ident: str) -> Any: ...
    def call(self, func: str, arg: Any) -> Any: ...
    def add(self, a: Any, b: Any) -> Any: ...
    def sub(self, a: Any, b: Any) -> Any: ...
    def mul(self, a: Any, b: Any) -> Any: ...
    def div(self, a: Any, b: Any) -> Any: ...
    def neg(self, a: Any) -> Any: ...
    def pow(self, a: Any, n: int) -> Any: ...


_INT = r"\d+"
_DEC = r"(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"
_TOKEN = re.compile(
    r"\s*(?:(?P<num>{num})|(?P<ident>[a-zA-Z][a-zA-Z0-9_]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str, decimals: bool) -> list[tuple[str, str, int]]:
    pattern = re.compile(_TOKEN.pattern.format(num=_DEC if decimals else _INT))
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = pattern.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
        # a decimal point glued to an integer literal means decimals are off
        if kind == "num" and not decimals and pos < len(text) and text[pos] in ".eE":
            raise ParseError("non-integer literal", text, pos)
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, builder: Builder, decimals: bool, functions: frozenset):
        self.text = text
        self.b = builder
        self.functions = functions
        self.tokens = _tokenize(text, decimals)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        kind, val, pos = self.take()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", self.text, pos)

    def error(self, msg: str):
        raise ParseError(msg, self.text, self.peek()[2])

    def parse(self):
        if self.peek()[0] == "end":
            self.error("empty expression")
        node = self.expr()
        if self.peek()[0] != "end":
            self.error("unexpected token")
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                node = self.b.add(node, rhs) if val == "+" else self.b.sub(node, rhs)
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                rhs = self.unary()
                node = self.b.mul(node, rhs) if val == "*" else self.b.div(node, rhs)
            else:
                return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            operand = self.unary()
            return self.b.neg(operand) if val == "-" else operand
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            sign = 1
            kind, val, pos = self.peek()
            if kind == "op" and val == "-":
                self.take()
                sign = -1
                kind, val, pos = self.peek()
            if kind != "num" or not val.isdigit():
                raise ParseError("exponent must be an integer literal", self.text, pos)
            self.take()
            return self.b.pow(base, sign * int(val))
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return self.b.number(Fraction(val))
        if kind == "ident":
            nkind, nval, _ = self.peek()
            if nkind == "op" and nval == "(":
                if val not in self.functions:
                    raise ParseError(f"unknown function {val!r}", self.text, pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return self.b.call(val, arg)
            return self.b.name(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError("unexpected token" if kind != "end" else "unexpected end", self.text, pos)


def parse(
    text: str,
    builder: Builder,
    *,
    decimals: bool = False,
    functions: frozenset | set = frozenset(),
):
    """Parse ``text`` and return whatever ``builder`` produces for the root."""
    return _Parser(text, builder, decimals, frozenset(functions)).parse()
