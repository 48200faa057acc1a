"""Piecewise semi-algebraic scalar expressions.

A small DSL for the closed-form functions used as cell bounds and as
components of maps between cells::

    -(x2^2+x3^2)/x1
    piecewise{ x1<0 && x2<0 : x1 ; _ : 0 }
    sign(x2)*sqrt((sqrt(x1^2+x2^2)-x1)/2) + 2*root4(x1^2+x2^2)

Constants are exact rationals.  Irrational constants are written as
expressions (``-(1+sqrt(5))/2``) so that interval evaluation stays sound.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Var", "Const", "Neg", "BinOp", "Pow", "Func", "MinMax", "Piecewise",
    "Cmp", "And", "Or", "Not", "Expr", "Guard",
    "ParseError", "parse", "parse_guard", "to_text", "guard_text",
    "arity", "substitute", "eval_array", "eval_guard_array", "eval_point",
    "const",
]


# --------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Const:
    value: Fraction


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Func:
    name: str  # sqrt, root4, abs, sign
    arg: "Expr"


@dataclass(frozen=True)
class MinMax:
    name: str  # min, max
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Piecewise:
    branches: tuple  # tuple[tuple[Guard, Expr], ...]
    default: "Expr"


@dataclass(frozen=True)
class Cmp:
    op: str  # < <= == >= >
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    arg: "Guard"


Expr = Union[Var, Const, Neg, BinOp, Pow, Func, MinMax, Piecewise]
Guard = Union[Cmp, And, Or, Not]

FUNCS = ("sqrt", "root4", "abs", "sign")
CMP_OPS = ("<=", ">=", "==", "<", ">")


def const(value) -> Const:
    return Const(Fraction(value))


# --------------------------------------------------------------------------
# Parsing

class ParseError(ValueError):
    """Syntax error in DSL source; ``pos`` is the character offset."""

    def __init__(self, message: str, pos: int, text: str = ""):
        super().__init__(f"{message} at position {pos}" + (f" in {text!r}" if text else ""))
        self.pos = pos


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:/\d+)?)|(?P<var>x\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><=|>=|==|&&|\|\||[-+*/^(){}<>:;,!]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    end = len(text.rstrip())
    while pos < end:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, arity: int):
        self.text = text
        self.arity = arity
        self.tokens = _tokenize(text)
        self.i = 0

    # token helpers
    def peek(self, offset: int = 0):
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def error(self, message: str):
        raise ParseError(message, self.peek()[2], self.text)

    def accept(self, value: str) -> bool:
        if self.peek()[1] == value and self.peek()[0] != "eof":
            self.i += 1
            return True
        return False

    def expect(self, value: str):
        if not self.accept(value):
            self.error(f"expected {value!r}, got {self.peek()[1] or 'end of input'!r}")

    # grammar
    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.tokens[self.i][1]
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.tokens[self.i][1]
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        if self.accept("-"):
            arg = self.factor()
            if isinstance(arg, Const):
                return Const(-arg.value)
            return Neg(arg)
        node = self.atom()
        if self.accept("^"):
            sign = -1 if self.accept("-") else 1
            kind, value, _ = self.peek()
            if kind != "num" or "/" in value:
                self.error("expected integer exponent")
            self.i += 1
            node = Pow(node, sign * int(value))
        return node

    def atom(self) -> Expr:
        kind, value, pos = self.peek()
        if kind == "num":
            self.i += 1
            return Const(Fraction(value))
        if kind == "var":
            self.i += 1
            index = int(value[1:])
            if not 1 <= index <= self.arity:
                raise ParseError(f"variable {value} out of arity {self.arity}", pos, self.text)
            return Var(index)
        if kind == "name":
            self.i += 1
            if value in FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(value, arg)
            if value in ("min", "max"):
                self.expect("(")
                left = self.expr()
                self.expect(",")
                right = self.expr()
                self.expect(")")
                return MinMax(value, left, right)
            if value == "piecewise":
                return self.piecewise()
            raise ParseError(f"unknown function {value!r}", pos, self.text)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        self.error(f"unexpected token {value or 'end of input'!r}")

    def piecewise(self) -> Piecewise:
        self.expect("{")
        branches = []
        while True:
            if self.peek()[1] == "_":
                self.i += 1
                self.expect(":")
                default = self.expr()
                self.accept(";")
                self.expect("}")
                break
            guard = self.guard()
            self.expect(":")
            branches.append((guard, self.expr()))
            self.expect(";")
        if not branches:
            self.error("piecewise needs at least one guarded branch")
        return Piecewise(tuple(branches), default)

    def guard(self) -> Guard:
        items = [self.conj()]
        while self.accept("||"):
            items.append(self.conj())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conj(self) -> Guard:
        items = [self.neg()]
        while self.accept("&&"):
            items.append(self.neg())
        return items[0] if len(items) == 1 else And(tuple(items))

    def neg(self) -> Guard:
        if self.accept("!"):
            return Not(self.neg())
        if self.peek()[1] == "(":
            # either a parenthesised guard or a comparison whose lhs starts with "("
            saved = self.i
            self.i += 1
            try:
                inner = self.guard()
                self.expect(")")
                if self.peek()[1] not in CMP_OPS and self.peek()[1] not in ("+", "-", "*", "/", "^"):
                    return inner
            except ParseError:
                pass
            self.i = saved
        return self.comparison()

    def comparison(self) -> Cmp:
        left = self.expr()
        op = self.peek()[1]
        if op not in CMP_OPS:
            self.error("expected comparison operator")
        self.i += 1
        return Cmp(op, left, self.expr())


def parse(text: str, arity: int) -> Expr:
    """Parse DSL source into an expression over ``x1..x<arity>``."""
    p = _Parser(text, arity)
    node = p.expr()
    if p.peek()[0] != "eof":
        p.error(f"trailing input {p.peek()[1]!r}")
    return node


def parse_guard(text: str, arity: int) -> Guard:
    p = _Parser(text, arity)
    node = p.guard()
    if p.peek()[0] != "eof":
        p.error(f"trailing input {p.peek()[1]!r}")
    return node


# --------------------------------------------------------------------------
# Printing

def _const_text(value: Fraction) -> str:
    body = str(abs(value))
    return f"(-{body})" if value < 0 else body


def to_text(e: Expr) -> str:
    """Fully parenthesised source; ``parse(to_text(e))`` equals ``e``."""
    match e:
        case Var(i):
            return f"x{i}"
        case Const(v):
            return _const_text(v)
        case Neg(a):
            return f"(-{to_text(a)})"
        case BinOp(op, a, b):
            return f"({to_text(a)} {op} {to_text(b)})"
        case Pow(a, n):
            return f"{to_text(a)}^{n}" if isinstance(a, (Var, Func, MinMax)) else f"({to_text(a)})^{n}"
        case Func(name, a):
            return f"{name}({to_text(a)})"
        case MinMax(name, a, b):
            return f"{name}({to_text(a)}, {to_text(b)})"
        case Piecewise(branches, default):
            parts = [f"{guard_text(g)} : {to_text(b)} ; " for g, b in branches]
            return "piecewise{ " + "".join(parts) + f"_ : {to_text(default)} }}"
    raise TypeError(f"not an expression: {e!r}")


def guard_text(g: Guard) -> str:
    match g:
        case Cmp(op, a, b):
            return f"{to_text(a)} {op} {to_text(b)}"
        case And(items):
            return "(" + " && ".join(guard_text(x) for x in items) + ")"
        case Or(items):
            return "(" + " || ".join(guard_text(x) for x in items) + ")"
        case Not(a):
            return f"!({guard_text(a)})"
    raise TypeError(f"not a guard: {g!r}")


# --------------------------------------------------------------------------
# Structure

def arity(e) -> int:
    """Largest variable index referenced (0 for closed expressions)."""
    match e:
        case Var(i):
            return i
        case Const():
            return 0
        case Neg(a) | Func(_, a) | Pow(a, _) | Not(a):
            return arity(a)
        case BinOp(_, a, b) | MinMax(_, a, b) | Cmp(_, a, b):
            return max(arity(a), arity(b))
        case And(items) | Or(items):
            return max(arity(x) for x in items)
        case Piecewise(branches, default):
            return max([arity(default)] + [max(arity(g), arity(b)) for g, b in branches])
    raise TypeError(f"not an expression: {e!r}")


def substitute(e, mapping: Union[Sequence[Expr], Mapping[int, Expr]]):
    """Replace ``x_i`` by ``mapping[i-1]`` (sequence) or ``mapping[i]`` (mapping).

    With a sequence this is composition: ``substitute(f, phi)`` is f∘phi.
    """
    if not isinstance(mapping, Mapping):
        mapping = {i + 1: m for i, m in enumerate(mapping)}
    match e:
        case Var(i):
            return mapping.get(i, e)
        case Const():
            return e
        case Neg(a):
            return Neg(substitute(a, mapping))
        case BinOp(op, a, b):
            return BinOp(op, substitute(a, mapping), substitute(b, mapping))
        case Pow(a, n):
            return Pow(substitute(a, mapping), n)
        case Func(name, a):
            return Func(name, substitute(a, mapping))
        case MinMax(name, a, b):
            return MinMax(name, substitute(a, mapping), substitute(b, mapping))
        case Piecewise(branches, default):
            return Piecewise(
                tuple((substitute(g, mapping), substitute(b, mapping)) for g, b in branches),
                substitute(default, mapping),
            )
        case Cmp(op, a, b):
            return Cmp(op, substitute(a, mapping), substitute(b, mapping))
        case And(items):
            return And(tuple(substitute(x, mapping) for x in items))
        case Or(items):
            return Or(tuple(substitute(x, mapping) for x in items))
        case Not(a):
            return Not(substitute(a, mapping))
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# Floating-point evaluation (vectorised)
#
# Undefined values (sqrt of a negative number, division by zero) are NaN and
# propagate; comparisons involving NaN are false.

def eval_array(e: Expr, X: np.ndarray) -> np.ndarray:
    """Evaluate ``e`` on points stored along the last axis of ``X``."""
    X = np.asarray(X, dtype=float)
    with np.errstate(all="ignore"):
        return np.asarray(_ev(e, X), dtype=float) + np.zeros(X.shape[:-1])


def _ev(e, X):
    match e:
        case Var(i):
            return X[..., i - 1]
        case Const(v):
            return float(v)
        case Neg(a):
            return -_ev(a, X)
        case BinOp(op, a, b):
            x, y = _ev(a, X), _ev(b, X)
            if op == "+":
                return x + y
            if op == "-":
                return x - y
            if op == "*":
                return x * y
            y = np.asarray(y, dtype=float)
            return np.where(y == 0, np.nan, x / np.where(y == 0, 1.0, y))
        case Pow(a, n):
            x = np.asarray(_ev(a, X), dtype=float)
            if n >= 0:
                return x ** n
            return np.where(x == 0, np.nan, 1.0 / np.where(x == 0, 1.0, x) ** (-n))
        case Func(name, a):
            x = np.asarray(_ev(a, X), dtype=float)
            if name == "sqrt":
                return np.where(x < 0, np.nan, np.sqrt(np.abs(x)))
            if name == "root4":
                return np.where(x < 0, np.nan, np.sqrt(np.sqrt(np.abs(x))))
            if name == "abs":
                return np.abs(x)
            return np.sign(x)
        case MinMax(name, a, b):
            fn = np.minimum if name == "min" else np.maximum
            return fn(_ev(a, X), _ev(b, X))
        case Piecewise(branches, default):
            result = np.asarray(_ev(default, X), dtype=float) + np.zeros(X.shape[:-1])
            # later branches first so that the first matching guard wins
            for g, b in reversed(branches):
                result = np.where(_evg(g, X), _ev(b, X), result)
            return result
    raise TypeError(f"not an expression: {e!r}")


def _evg(g, X):
    match g:
        case Cmp(op, a, b):
            x, y = _ev(a, X), _ev(b, X)
            if op == "<":
                return x < y
            if op == "<=":
                return x <= y
            if op == "==":
                return x == y
            if op == ">=":
                return x >= y
            return x > y
        case And(items):
            out = _evg(items[0], X)
            for item in items[1:]:
                out = out & _evg(item, X)
            return out
        case Or(items):
            out = _evg(items[0], X)
            for item in items[1:]:
                out = out | _evg(item, X)
            return out
        case Not(a):
            return ~np.asarray(_evg(a, X), dtype=bool)
    raise TypeError(f"not a guard: {g!r}")


def eval_guard_array(g: Guard, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    with np.errstate(all="ignore"):
        return np.asarray(_evg(g, X), dtype=bool) & np.ones(X.shape[:-1], dtype=bool)


def eval_point(e: Expr, p: Sequence[float], arity_: int | None = None) -> float | None:
    """Value of ``e`` at ``p``; ``None`` where undefined.

    ``arity_`` (when given) must equal ``len(p)``.
    """
    if arity_ is not None and len(p) != arity_:
        raise ValueError(f"point has {len(p)} coordinates, expected {arity_}")
    if arity(e) > len(p):
        raise ValueError(f"expression needs {arity(e)} coordinates, point has {len(p)}")
    value = float(eval_array(e, np.asarray(p, dtype=float).reshape(1, -1) if len(p) else np.zeros((1, 0)))[0])
    return None if np.isnan(value) else value
