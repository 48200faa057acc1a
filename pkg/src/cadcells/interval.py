"""Outward-rounded interval enclosures of DSL expressions.

Intervals are stored as pairs of float arrays so that many boxes can be
evaluated in one pass.  An empty enclosure (the expression is undefined on
the whole box) is encoded as ``lo = +inf, hi = -inf``.

Guards evaluate three-valued: ``TRUE``/``FALSE``/``UNKNOWN``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .expr import And, BinOp, Cmp, Const, Func, MinMax, Neg, Not, Or, Piecewise, Pow, Var

INF = math.inf
FALSE, UNKNOWN, TRUE = 0, 1, 2


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.is_empty and self.lo > self.hi:
            raise ValueError(f"lo > hi in [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(float(x), float(x))

    @classmethod
    def empty(cls) -> "Interval":
        return cls(INF, -INF)

    @property
    def is_empty(self) -> bool:
        return self.lo == INF and self.hi == -INF

    @property
    def width(self) -> float:
        return 0.0 if self.is_empty else self.hi - self.lo

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def encloses(self, other: "Interval") -> bool:
        return other.is_empty or (self.lo <= other.lo and other.hi <= self.hi)

    def __repr__(self):
        return "Interval(empty)" if self.is_empty else f"Interval({self.lo!r}, {self.hi!r})"


# Zero results are kept exact: a rounded sum or difference is zero only when
# exact, and products that underflow are widened explicitly in ``_mul``.
def _down(x):
    return np.where(x == 0, 0.0, np.nextafter(x, -INF))


def _up(x):
    return np.where(x == 0, 0.0, np.nextafter(x, INF))


_TINY = 5e-324


class _IV:
    """Array-valued interval used internally by the evaluator."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)

    @property
    def empty(self):
        return self.lo > self.hi

    def masked(self, empty_mask) -> "_IV":
        return _IV(np.where(empty_mask, INF, self.lo), np.where(empty_mask, -INF, self.hi))


def _const_iv(v: Fraction, shape) -> _IV:
    f = float(v)
    exact = Fraction(f) == v
    lo = f if exact else float(_down(f))
    hi = f if exact else float(_up(f))
    return _IV(np.full(shape, lo), np.full(shape, hi))


def _mul_endpoint(a, b):
    # 0 * inf = 0 (the infinite endpoint is never attained)
    with np.errstate(invalid="ignore", under="ignore"):
        p = a * b
    p = np.where(np.isnan(p), 0.0, p)
    underflow = (p == 0) & (a != 0) & (b != 0)
    return np.where(underflow, np.sign(a) * np.sign(b) * _TINY, p)


def _mul(x: _IV, y: _IV) -> _IV:
    cands = [_mul_endpoint(a, b) for a in (x.lo, x.hi) for b in (y.lo, y.hi)]
    lo = _down(np.minimum.reduce(cands))
    hi = _up(np.maximum.reduce(cands))
    return _IV(lo, hi).masked(x.empty | y.empty)


def _recip(y: _IV) -> _IV:
    with np.errstate(divide="ignore"):
        inv_lo = _down(1.0 / y.hi)
        inv_hi = _up(1.0 / y.lo)
    pos = y.lo > 0
    neg = y.hi < 0
    lo = np.where(pos | neg, inv_lo, -INF)
    hi = np.where(pos | neg, inv_hi, INF)
    # zero as an endpoint only: one-sided unbounded reciprocal
    lower_zero = (y.lo == 0) & (y.hi > 0)
    upper_zero = (y.hi == 0) & (y.lo < 0)
    lo = np.where(lower_zero, inv_lo, lo)
    hi = np.where(upper_zero, inv_hi, hi)
    point_zero = (y.lo == 0) & (y.hi == 0)
    return _IV(lo, hi).masked(y.empty | point_zero)


def _pow(x: _IV, n: int) -> _IV:
    if n == 0:
        return _IV(np.where(x.empty, INF, 1.0), np.where(x.empty, -INF, 1.0))
    if n < 0:
        return _recip(_pow(x, -n))
    with np.errstate(over="ignore", under="ignore"):
        a, b = x.lo ** n, x.hi ** n
    a = np.where((a == 0) & (x.lo != 0), np.sign(x.lo) ** n * _TINY, a)
    b = np.where((b == 0) & (x.hi != 0), np.sign(x.hi) ** n * _TINY, b)
    if n % 2 == 1:
        return _IV(_down(a), _up(b)).masked(x.empty)
    lo = np.where(x.lo >= 0, a, np.where(x.hi <= 0, b, 0.0))
    hi = np.where(x.lo >= 0, b, np.where(x.hi <= 0, a, np.maximum(a, b)))
    return _IV(np.maximum(_down(lo), 0.0), _up(hi)).masked(x.empty)


def _sqrt(x: _IV) -> _IV:
    lo = np.sqrt(np.maximum(x.lo, 0.0))
    hi = np.sqrt(np.maximum(x.hi, 0.0))
    return _IV(np.maximum(_down(lo), 0.0), _up(hi)).masked(x.empty | (x.hi < 0))


def _hull(x: _IV, y: _IV) -> _IV:
    return _IV(np.minimum(x.lo, y.lo), np.maximum(x.hi, y.hi))


def _iv(e, lo: np.ndarray, hi: np.ndarray) -> _IV:
    shape = lo.shape[:-1]
    match e:
        case Var(i):
            return _IV(lo[..., i - 1], hi[..., i - 1])
        case Const(v):
            return _const_iv(v, shape)
        case Neg(a):
            x = _iv(a, lo, hi)
            return _IV(-x.hi, -x.lo)
        case BinOp(op, a, b):
            x, y = _iv(a, lo, hi), _iv(b, lo, hi)
            if op == "+":
                with np.errstate(invalid="ignore"):
                    return _IV(_down(x.lo + y.lo), _up(x.hi + y.hi)).masked(x.empty | y.empty)
            if op == "-":
                with np.errstate(invalid="ignore"):
                    return _IV(_down(x.lo - y.hi), _up(x.hi - y.lo)).masked(x.empty | y.empty)
            if op == "*":
                return _mul(x, y)
            return _mul(x, _recip(y))
        case Pow(a, n):
            return _pow(_iv(a, lo, hi), n)
        case Func(name, a):
            x = _iv(a, lo, hi)
            if name == "sqrt":
                return _sqrt(x)
            if name == "root4":
                return _sqrt(_sqrt(x))
            if name == "abs":
                lo_ = np.where(x.lo >= 0, x.lo, np.where(x.hi <= 0, -x.hi, 0.0))
                hi_ = np.maximum(np.abs(x.lo), np.abs(x.hi))
                return _IV(lo_, hi_).masked(x.empty)
            return _IV(np.sign(x.lo), np.sign(x.hi)).masked(x.empty)
        case MinMax(name, a, b):
            x, y = _iv(a, lo, hi), _iv(b, lo, hi)
            fn = np.minimum if name == "min" else np.maximum
            return _IV(fn(x.lo, y.lo), fn(x.hi, y.hi)).masked(x.empty | y.empty)
        case Piecewise(branches, default):
            result = _IV(np.full(shape, INF), np.full(shape, -INF))
            reachable = np.ones(shape, dtype=bool)
            for g, b in branches:
                t = _ivg(g, lo, hi)
                take = reachable & (t != FALSE)
                if take.any():
                    br = _iv(b, lo, hi)
                    result = _hull(result, br.masked(~take))
                reachable &= t != TRUE
            if reachable.any():
                result = _hull(result, _iv(default, lo, hi).masked(~reachable))
            return result
    raise TypeError(f"not an expression: {e!r}")


def _ivg(g, lo, hi) -> np.ndarray:
    match g:
        case Cmp(op, a, b):
            x, y = _iv(a, lo, hi), _iv(b, lo, hi)
            if op in (">", ">="):
                x, y = y, x
                op = "<" if op == ">" else "<="
            if op == "<":
                out = np.where(x.hi < y.lo, TRUE, np.where(x.lo >= y.hi, FALSE, UNKNOWN))
            elif op == "<=":
                out = np.where(x.hi <= y.lo, TRUE, np.where(x.lo > y.hi, FALSE, UNKNOWN))
            else:
                point = (x.lo == x.hi) & (y.lo == y.hi) & (x.lo == y.lo)
                out = np.where(point, TRUE, np.where((x.hi < y.lo) | (x.lo > y.hi), FALSE, UNKNOWN))
            # undefined everywhere on the box: the pointwise comparison is false
            return np.where(x.empty | y.empty, FALSE, out)
        case And(items):
            out = _ivg(items[0], lo, hi)
            for item in items[1:]:
                out = np.minimum(out, _ivg(item, lo, hi))
            return out
        case Or(items):
            out = _ivg(items[0], lo, hi)
            for item in items[1:]:
                out = np.maximum(out, _ivg(item, lo, hi))
            return out
        case Not(a):
            return TRUE - _ivg(a, lo, hi)
    raise TypeError(f"not a guard: {g!r}")


def eval_interval_arrays(e, lo, hi) -> tuple[np.ndarray, np.ndarray]:
    """Enclosures of ``e`` over boxes ``[lo, hi]`` (boxes along the last axis)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    with np.errstate(all="ignore"):
        r = _iv(e, lo, hi)
    shape = lo.shape[:-1]
    return r.lo + np.zeros(shape), r.hi + np.zeros(shape)


def eval_guard_interval(g, lo, hi) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    with np.errstate(all="ignore"):
        return np.asarray(_ivg(g, lo, hi)) + np.zeros(lo.shape[:-1], dtype=int)


def eval_interval(e, box: Sequence[Interval]) -> Interval:
    """Enclosure of ``{e(p) : p in box, e(p) defined}``."""
    if any(iv.is_empty for iv in box):
        return Interval.empty()
    lo = np.array([[iv.lo for iv in box]], dtype=float).reshape(1, len(box))
    hi = np.array([[iv.hi for iv in box]], dtype=float).reshape(1, len(box))
    rlo, rhi = eval_interval_arrays(e, lo, hi)
    if rlo[0] > rhi[0]:
        return Interval.empty()
    return Interval(float(rlo[0]), float(rhi[0]))


def point_box(p: Sequence[float]) -> list[Interval]:
    return [Interval.point(x) for x in p]
