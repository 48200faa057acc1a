"""Cells built by stacking sections and sectors, and cylindrical decompositions.

A cell is a chain of levels.  The bottom level is a point or an open interval
of the line (or, for sets that are not CAD cells such as the slit disk, a
``Region`` given by a guard).  Every further level is a section (graph of a
bound) or a sector (band between two bounds) over the cell below.

Coordinates of the point/interval, region and sector levels are *free*: a
point of a cell is determined by its free coordinates, the section levels
being computed from the bounds.  ``lift`` turns free coordinates into points
and is what the samplers and the closure oracle search over.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import expr as E
from .interval import FALSE, TRUE, eval_guard_interval, eval_interval_arrays

IN, OUT, UNCERTAIN = "in", "out", "uncertain"
DEFAULT_BOX = 8.0


class OrderingError(ValueError):
    """Bounds of a stack are not strictly increasing on the base."""


@dataclass(frozen=True, eq=False)
class Cell:
    label: str = field(default="", kw_only=True)
    index: Optional[tuple] = field(default=None, kw_only=True)

    def __repr__(self):
        name = self.label or type(self).__name__
        return f"<{name} dim={dimension(self)} ambient={ambient(self)}>"


@dataclass(frozen=True, eq=False, repr=False)
class Point1D(Cell):
    value: E.Expr


@dataclass(frozen=True, eq=False, repr=False)
class Interval1D(Cell):
    lo: Optional[E.Expr]  # None: -inf
    hi: Optional[E.Expr]  # None: +inf


@dataclass(frozen=True, eq=False, repr=False)
class Region(Cell):
    """Open semi-algebraic subset of R^dim given by a guard (not a CAD cell)."""

    dim: int
    guard: E.Guard
    bbox: tuple  # ((lo, hi), ...) enclosing the region, used for sampling
    cell_dim: Optional[int] = None


@dataclass(frozen=True, eq=False, repr=False)
class Section(Cell):
    base: Cell
    bound: E.Expr


@dataclass(frozen=True, eq=False, repr=False)
class Sector(Cell):
    base: Cell
    lo: Optional[E.Expr]
    hi: Optional[E.Expr]


# --------------------------------------------------------------------------
# Structure

def ambient(c: Cell) -> int:
    if isinstance(c, (Point1D, Interval1D)):
        return 1
    if isinstance(c, Region):
        return c.dim
    return ambient(c.base) + 1


def dimension(c: Cell) -> int:
    match c:
        case Point1D():
            return 0
        case Interval1D():
            return 1
        case Region(dim=d, cell_dim=cd):
            return d if cd is None else cd
        case Section(base=b):
            return dimension(b)
        case Sector(base=b):
            return dimension(b) + 1
    raise TypeError(c)


def project(c: Cell) -> Cell:
    """The base cell (image under projection forgetting the last coordinate)."""
    if isinstance(c, (Section, Sector)):
        return c.base
    raise ValueError(f"{c!r} has no base cell")


def chain(c: Cell) -> list[Cell]:
    levels = [c]
    while isinstance(levels[-1], (Section, Sector)):
        levels.append(levels[-1].base)
    return levels[::-1]


def free_indices(c: Cell) -> list[int]:
    """Coordinates (0-based) that parametrise the cell."""
    out = []
    for level in chain(c):
        k = ambient(level) - 1
        if isinstance(level, Region):
            out.extend(range(level.dim))
        elif isinstance(level, (Interval1D, Sector)):
            out.append(k)
    return out


def bounds_of(c: Cell) -> list:
    match c:
        case Point1D(value=v):
            return [v]
        case Interval1D(lo=lo, hi=hi) | Sector(lo=lo, hi=hi):
            return [b for b in (lo, hi) if b is not None]
        case Section(bound=b):
            return [b]
    return []


# --------------------------------------------------------------------------
# Floating-point evaluation on batches of points

def _eval_bound(b, X, k):
    if X.shape[-1] == k:
        return E.eval_array(b, X)
    return E.eval_array(b, X[..., :k])


def lift(c: Cell, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Points of ``c`` with free coordinates ``theta`` and their validity mask.

    ``theta`` has shape ``(..., len(free_indices(c)))``.  Invalid entries
    (free coordinate outside its open range, undefined bound) are flagged in
    the returned mask; their coordinates are unspecified.
    """
    theta = np.asarray(theta, dtype=float)
    n = ambient(c)
    shape = theta.shape[:-1]
    X = np.zeros(shape + (n,))
    valid = np.ones(shape, dtype=bool)
    j = 0
    with np.errstate(all="ignore"):
        for level in chain(c):
            k = ambient(level) - 1
            match level:
                case Point1D(value=v):
                    X[..., 0] = E.eval_array(v, np.zeros(shape + (0,)))
                case Interval1D(lo=lo, hi=hi):
                    t = theta[..., j]
                    j += 1
                    X[..., 0] = t
                    if lo is not None:
                        valid &= t > E.eval_array(lo, np.zeros(shape + (0,)))
                    if hi is not None:
                        valid &= t < E.eval_array(hi, np.zeros(shape + (0,)))
                case Region(dim=d, guard=g):
                    X[..., :d] = theta[..., j:j + d]
                    j += d
                    valid &= E.eval_guard_array(g, X[..., :d])
                case Section(bound=b):
                    v = _eval_bound(b, X[..., :k], k)
                    X[..., k] = v
                    valid &= np.isfinite(v)
                case Sector(lo=lo, hi=hi):
                    t = theta[..., j]
                    j += 1
                    X[..., k] = t
                    valid &= np.isfinite(t)
                    if lo is not None:
                        valid &= t > _eval_bound(lo, X[..., :k], k)
                    if hi is not None:
                        valid &= t < _eval_bound(hi, X[..., :k], k)
    return X, valid


def contains_array(c: Cell, X: np.ndarray, atol: float = 0.0) -> np.ndarray:
    """Floating-point membership for a batch of points (no enclosures).

    Section levels match when the coordinate is within ``atol`` of the bound.
    """
    X = np.asarray(X, dtype=float)
    idx = free_indices(c)
    lifted, valid = lift(c, X[..., idx])
    with np.errstate(invalid="ignore"):
        close = np.abs(lifted - X) <= atol * np.maximum(1.0, np.abs(X))
    return valid & np.all(close, axis=-1)


# --------------------------------------------------------------------------
# Three-valued membership with interval enclosures

def _enc(b, prefix_lo, prefix_hi):
    return eval_interval_arrays(b, prefix_lo, prefix_hi)


def contains(c: Cell, p: Sequence[float], width_floor: float = 1e-12) -> str:
    """``"in"``, ``"out"`` or ``"uncertain"``.

    Bounds are enclosed with interval arithmetic at the (exact) point.  A
    coordinate lying inside the enclosure of a section bound counts as on the
    graph when that enclosure is narrower than ``width_floor`` (relative).
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (ambient(c),):
        raise ValueError(f"point has {p.size} coordinates, cell lives in R^{ambient(c)}")
    verdict = IN
    for level in chain(c):
        k = ambient(level) - 1
        pre = p[:k].reshape(1, k)
        t = p[k]
        tol = width_floor * max(1.0, abs(t))
        match level:
            case Region(dim=d, guard=g):
                v = int(eval_guard_interval(g, p[:d].reshape(1, d), p[:d].reshape(1, d))[0])
                state = IN if v == TRUE else OUT if v == FALSE else UNCERTAIN
            case Point1D(value=b) | Section(bound=b):
                lo, hi = _enc(b, pre, pre)
                lo, hi = float(lo[0]), float(hi[0])
                if lo > hi or t < lo - tol or t > hi + tol:
                    state = OUT
                elif hi - lo <= tol:
                    state = IN
                else:
                    state = UNCERTAIN
            case Interval1D(lo=lb, hi=ub) | Sector(lo=lb, hi=ub):
                state = IN
                for bound, sign in ((lb, 1), (ub, -1)):
                    if bound is None:
                        continue
                    lo, hi = _enc(bound, pre, pre)
                    lo, hi = float(lo[0]), float(hi[0])
                    if lo > hi:
                        state = OUT
                        break
                    # sign=1: need t > bound ; sign=-1: need t < bound
                    if (sign == 1 and t <= lo) or (sign == -1 and t >= hi):
                        state = OUT
                        break
                    if (sign == 1 and t <= hi) or (sign == -1 and t >= lo):
                        state = UNCERTAIN
            case _:
                raise TypeError(level)
        if state == OUT:
            return OUT
        if state == UNCERTAIN:
            verdict = UNCERTAIN
    return verdict


def _branch_encs(b, plo, phi) -> list:
    """Enclosures of the reachable branches of ``b`` over boxes (one pair for plain bounds)."""
    if not isinstance(b, E.Piecewise):
        return [_enc(b, plo, phi)]
    out = []
    reachable = np.ones(plo.shape[:-1], dtype=bool)
    for g, e in b.branches:
        t = eval_guard_interval(g, plo, phi)
        take = reachable & (t != FALSE)
        blo, bhi = _enc(e, plo, phi)
        out.append((np.where(take, blo, np.inf), np.where(take, bhi, -np.inf)))
        reachable &= t != TRUE
    blo, bhi = _enc(b.default, plo, phi)
    out.append((np.where(reachable, blo, np.inf), np.where(reachable, bhi, -np.inf)))
    return out


def box_maybe_meets(c: Cell, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """False where the closed box ``[lo, hi]`` certainly misses ``c``.

    Forward constraint propagation through the chain: every level clips its
    coordinate range to the enclosure of its bound(s).  Boxes covering an
    open ball that all miss ``c`` keep the ball's centre out of the closure.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    maybe = np.all(lo <= hi, axis=-1)
    for level in chain(c):
        k = ambient(level) - 1
        match level:
            case Region(dim=d, guard=g, bbox=bbox):
                for i, (a, b) in enumerate(bbox):
                    lo[..., i] = np.maximum(lo[..., i], a)
                    hi[..., i] = np.minimum(hi[..., i], b)
                maybe &= np.all(lo[..., :d] <= hi[..., :d], axis=-1)
                maybe &= eval_guard_interval(g, lo[..., :d], hi[..., :d]) != FALSE
                continue
            case Point1D(value=b) | Section(bound=b):
                # union (not hull) of the branch enclosures of a piecewise bound
                new_lo = np.full(lo.shape[:-1], np.inf)
                new_hi = np.full(lo.shape[:-1], -np.inf)
                for blo, bhi in _branch_encs(b, lo[..., :k], hi[..., :k]):
                    a = np.maximum(lo[..., k], blo)
                    z = np.minimum(hi[..., k], bhi)
                    hit = a <= z
                    new_lo = np.where(hit, np.minimum(new_lo, a), new_lo)
                    new_hi = np.where(hit, np.maximum(new_hi, z), new_hi)
            case Interval1D(lo=lb, hi=ub) | Sector(lo=lb, hi=ub):
                new_lo, new_hi = lo[..., k].copy(), hi[..., k].copy()
                if lb is not None:
                    blo, bhi = _enc(lb, lo[..., :k], hi[..., :k])
                    maybe &= blo <= bhi
                    new_lo = np.maximum(new_lo, blo)
                if ub is not None:
                    blo, bhi = _enc(ub, lo[..., :k], hi[..., :k])
                    maybe &= blo <= bhi
                    new_hi = np.minimum(new_hi, bhi)
            case _:
                raise TypeError(level)
        maybe &= new_lo <= new_hi
        lo[..., k] = np.where(maybe, new_lo, lo[..., k])
        hi[..., k] = np.where(maybe, new_hi, hi[..., k])
    return maybe


# --------------------------------------------------------------------------
# Sampling

def _draw(rng, a, b, box):
    """Random values in the open ranges (a, b); infinite sides are truncated."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo = np.where(np.isfinite(a), a, np.minimum(-box, b - 1.0))
    hi = np.where(np.isfinite(b), b, np.maximum(box, a + 1.0))
    u = rng.random(lo.shape)
    mode = rng.random(lo.shape)
    # a quarter of the draws hug one of the two ends
    near_lo = np.where(mode < 0.125, u ** 3, u)
    near = np.where(mode > 0.875, 1.0 - u ** 3, near_lo)
    return lo + (hi - lo) * near


def sample(c: Cell, n: int, rng: np.random.Generator, box: float = DEFAULT_BOX,
           max_rounds: int = 200) -> np.ndarray:
    """``n`` random points of ``c`` (fewer only if the cell is very thin)."""
    dim_amb = ambient(c)
    out = np.zeros((0, dim_amb))
    for _ in range(max_rounds):
        need = n - len(out)
        if need <= 0:
            break
        m = max(2 * need, 16)
        X = np.zeros((m, dim_amb))
        ok = np.ones(m, dtype=bool)
        with np.errstate(all="ignore"):
            for level in chain(c):
                k = ambient(level) - 1
                match level:
                    case Point1D(value=v):
                        X[:, 0] = float(E.eval_array(v, np.zeros((1, 0)))[0])
                    case Interval1D(lo=lb, hi=ub):
                        a = -np.inf if lb is None else float(E.eval_array(lb, np.zeros((1, 0)))[0])
                        b = np.inf if ub is None else float(E.eval_array(ub, np.zeros((1, 0)))[0])
                        X[:, 0] = _draw(rng, np.full(m, a), np.full(m, b), box)
                    case Region(dim=d, guard=g, bbox=bbox):
                        lows = np.array([q[0] for q in bbox])
                        highs = np.array([q[1] for q in bbox])
                        X[:, :d] = lows + (highs - lows) * rng.random((m, d))
                        ok &= E.eval_guard_array(g, X[:, :d])
                    case Section(bound=b):
                        X[:, k] = E.eval_array(b, X[:, :k])
                    case Sector(lo=lb, hi=ub):
                        a = np.full(m, -np.inf) if lb is None else E.eval_array(lb, X[:, :k])
                        b = np.full(m, np.inf) if ub is None else E.eval_array(ub, X[:, :k])
                        ok &= ~np.isnan(a) & ~np.isnan(b)
                        X[:, k] = _draw(rng, np.nan_to_num(a, nan=0.0, neginf=-np.inf),
                                        np.nan_to_num(b, nan=1.0, posinf=np.inf), box)
        _, valid = lift(c, X[:, free_indices(c)])
        ok &= valid & np.all(np.isfinite(X), axis=1)
        out = np.vstack([out, X[ok][:need]])
    return out


# --------------------------------------------------------------------------
# Construction (inductive definition of a CAD)

def _closed_value(e) -> float:
    v = E.eval_point(e, [])
    if v is None:
        raise ValueError(f"constant {E.to_text(e)} is undefined")
    return v


def build_level1(points: Sequence, prefix_label: str = "C") -> list[Cell]:
    """Cells of a decomposition of the line cut at the given increasing points."""
    values = [_closed_value(p) for p in points]
    if any(b <= a for a, b in zip(values, values[1:])):
        raise OrderingError("split points must be strictly increasing")
    cells: list[Cell] = []
    bounds = [None] + list(points) + [None]
    for j in range(len(points) + 1):
        idx = (2 * j + 1,)
        cells.append(Interval1D(bounds[j], bounds[j + 1], label=prefix_label + _idx_text(idx), index=idx))
        if j < len(points):
            idx = (2 * j + 2,)
            cells.append(Point1D(points[j], label=prefix_label + _idx_text(idx), index=idx))
    return cells


def _idx_text(idx) -> str:
    if all(i < 10 for i in idx):
        return "".join(str(i) for i in idx)
    return ".".join(str(i) for i in idx)


def check_stack_order(base: Cell, bounds: Sequence, rng=None, n: int = 2000) -> None:
    if len(bounds) < 2:
        return
    rng = rng if rng is not None else np.random.default_rng(0)
    X = sample(base, n, rng)
    if len(X) == 0:
        return
    vals = np.stack([E.eval_array(b, X) for b in bounds], axis=-1)
    bad = ~(np.diff(vals, axis=-1) > 0).all(axis=-1)
    if bad.any():
        raise OrderingError(f"stack bounds not increasing at {X[bad][0].tolist()}")


def stack(base: Cell, bounds: Sequence, rng=None, check: bool = True) -> list[Cell]:
    """Sectors and sections over ``base`` cut by the increasing ``bounds``."""
    if check:
        check_stack_order(base, bounds, rng)
    prefix = base.index if base.index is not None else ()
    name = base.label or "C"
    ext = [None] + list(bounds) + [None]
    cells: list[Cell] = []
    for j in range(len(bounds) + 1):
        idx = prefix + (2 * j + 1,)
        cells.append(Sector(base, ext[j], ext[j + 1], label=_child_label(name, base, idx), index=idx))
        if j < len(bounds):
            idx = prefix + (2 * j + 2,)
            cells.append(Section(base, bounds[j], label=_child_label(name, base, idx), index=idx))
    return cells


def _child_label(name: str, base: Cell, idx) -> str:
    if base.index is not None and name.startswith("C"):
        return "C" + _idx_text(idx)
    return f"{name}:{idx[-1]}"


@dataclass(frozen=True, eq=False)
class Cad:
    """Cylindrical decomposition: ``levels[k-1]`` partitions R^k."""

    levels: tuple

    @property
    def n(self) -> int:
        return len(self.levels)

    @property
    def cells(self) -> tuple:
        return self.levels[-1]

    def cell(self, label: str) -> Cell:
        for level in self.levels:
            for c in level:
                if c.label == label:
                    return c
        raise KeyError(label)

    @classmethod
    def build(cls, n: int, level1: Sequence, stacks: dict, rng=None, check: bool = True) -> "Cad":
        """CAD of R^n; ``stacks`` maps a base index tuple to its increasing bounds."""
        levels = [tuple(build_level1(level1))]
        while len(levels) < n:
            nxt = []
            for c in levels[-1]:
                nxt.extend(stack(c, stacks.get(tuple(c.index), []), rng=rng, check=check))
            levels.append(tuple(nxt))
        return cls(tuple(levels))

    def locate(self, X: np.ndarray) -> np.ndarray:
        """Number of top-level cells containing each point (floating point)."""
        X = np.atleast_2d(X)
        return sum(contains_array(c, X).astype(int) for c in self.cells)


def partition_counts(cad: Cad, n: int, rng, box: float = DEFAULT_BOX) -> dict:
    """Sampled partition check on a level: how many cells report ``in`` per point."""
    out = {}
    for k, level in enumerate(cad.levels, start=1):
        X = rng.uniform(-box, box, size=(n, k))
        counts = np.zeros(n, dtype=int)
        uncertain = np.zeros(n, dtype=bool)
        for c in level:
            counts += contains_array(c, X)
        for i in np.flatnonzero(counts != 1):
            states = [contains(c, X[i]) for c in level]
            counts[i] = states.count(IN)
            uncertain[i] = UNCERTAIN in states
        out[k] = {"exactly_one": int(np.sum(counts == 1)), "uncertain": int(uncertain.sum()),
                  "bad": int(np.sum((counts != 1) & ~uncertain))}
    return out


def all_cells(cad: Cad):
    return list(itertools.chain.from_iterable(cad.levels))
