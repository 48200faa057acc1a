"""Closure membership: witness chains for ``yes``, interval separation for ``no``.

A point ``p`` is reported in the closure of a cell when, for every radius
``2^-k`` (k = 1..K), a point of the cell within that radius is exhibited.
The search runs in the cell's free coordinates (see ``cells.lift``),
warm-starting each radius from the previous witness.  Moves mix

* log-uniform additive steps per coordinate (reach witnesses whose
  coordinates live on very different scales, e.g. x1 ~ x2^2),
* contractions towards ``p`` with per-coordinate exponents in {0, 1/2, 1, 2}
  (follow parabola-like approach paths),
* clamping of the free coordinates into their admissible open ranges, the
  last sector coordinate being pulled onto ``p`` directly.

A ``no`` needs a box around ``p`` that interval propagation proves disjoint
from the closure (``cells.box_maybe_meets``), refined by subdivision when a
single box is not enough.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import expr as E
from ..cells import (Cell, Interval1D, Point1D, Region, Section, Sector, ambient, box_maybe_meets,
                     chain, contains_array, free_indices, lift)
from .config import OracleConfig

YES, NO, UNKNOWN = "yes", "no", "unknown"
_CODES = np.array([YES, NO, UNKNOWN])


@dataclass
class ClosureVerdict:
    kind: str
    witness_chain: list = field(default_factory=list)   # [(eps, point), ...]
    separation: tuple | None = None                     # (radius, [[lo, hi], ...])
    distance: float = np.inf                            # best witness distance found

    def __bool__(self):
        return self.kind == YES


@dataclass
class BatchResult:
    kind: np.ndarray        # "yes" / "no" / "unknown"
    distance: np.ndarray    # best witness distance (upper bound of the true distance)
    radius: np.ndarray      # certified separation radius (0 when none)
    witness: np.ndarray     # best witness point (nan when none)
    level: np.ndarray       # number of radii 2^-k witnessed

    def __len__(self):
        return len(self.kind)


# --------------------------------------------------------------------------
# Free-coordinate repair

def repair(c: Cell, theta: np.ndarray, target: np.ndarray | None, margin) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clamp free coordinates into their open ranges, level by level.

    Returns ``(theta, X, valid)``.  ``margin`` keeps clamped values strictly
    inside (it is capped by a quarter of the range width).  When ``target`` is
    given, the coordinate of the last level (if it is a sector) is set to the
    clamp of the target coordinate.
    """
    theta = np.array(theta, dtype=float)
    shape = theta.shape[:-1]
    X = np.zeros(shape + (ambient(c),))
    valid = np.ones(shape, dtype=bool)
    margin = np.broadcast_to(np.asarray(margin, dtype=float), shape)
    levels = chain(c)
    j = 0
    with np.errstate(all="ignore"):
        for pos, level in enumerate(levels):
            k = ambient(level) - 1
            match level:
                case Point1D(value=v):
                    X[..., 0] = E.eval_array(v, np.zeros(shape + (0,)))
                case Region(dim=d, guard=g):
                    X[..., :d] = theta[..., j:j + d]
                    valid &= E.eval_guard_array(g, X[..., :d])
                    j += d
                case Section(bound=b):
                    X[..., k] = E.eval_array(b, X[..., :k])
                    valid &= np.isfinite(X[..., k])
                case Interval1D(lo=lb, hi=ub) | Sector(lo=lb, hi=ub):
                    pre = X[..., :k]
                    lo = np.full(shape, -np.inf) if lb is None else E.eval_array(lb, pre)
                    hi = np.full(shape, np.inf) if ub is None else E.eval_array(ub, pre)
                    valid &= ~np.isnan(lo) & ~np.isnan(hi) & (lo < hi)
                    t = theta[..., j]
                    if target is not None and pos == len(levels) - 1 and isinstance(level, Sector):
                        t = np.broadcast_to(target[..., k], shape)
                    width = hi - lo
                    m = np.where(np.isfinite(width), np.minimum(margin, width / 4), margin)
                    t = np.where(t <= lo, lo + m, t)
                    t = np.where(t >= hi, hi - m, t)
                    valid &= (t > lo) & (t < hi) & np.isfinite(t)
                    theta[..., j] = t
                    X[..., k] = t
                    j += 1
    return theta, X, valid


# --------------------------------------------------------------------------
# Witness search

def _distance(X, P):
    with np.errstate(all="ignore"):
        d = np.sqrt(np.sum((X - P) ** 2, axis=-1))
    return np.where(np.isnan(d), np.inf, d)


def _levels_for(d, K):
    with np.errstate(divide="ignore"):
        lv = np.floor(-np.log2(np.maximum(d, 1e-300)))
    return np.clip(np.where(np.isfinite(d), lv, 0), 0, K).astype(int)


def witness_search(c: Cell, P: np.ndarray, cfg: OracleConfig, rng: np.random.Generator,
                   levels: int | None = None, start: np.ndarray | None = None):
    """Search points of ``c`` approaching each row of ``P``.

    Returns ``(level, distance, witness)`` where ``level[i]`` is the largest k
    (<= ``levels``) with a witness within ``2^-k`` of ``P[i]``.
    """
    K = cfg.eps_levels if levels is None else levels
    P = np.atleast_2d(np.asarray(P, dtype=float))
    N = len(P)
    idx = free_indices(c)
    m = len(idx)
    best_d = np.full(N, np.inf)
    best_t = np.zeros((N, m))
    best_X = np.full(P.shape, np.nan)
    if N == 0:
        return np.zeros(0, dtype=int), best_d, best_X
    pf = P[:, idx]

    # initial population around the target
    pop = 4 * cfg.candidates
    cand = np.repeat(pf[:, None, :], pop, axis=1)
    if m:
        mag = 10.0 ** (-rng.uniform(0, 16, size=(N, pop, m)))
        sgn = rng.choice([-1.0, 1.0], size=(N, pop, m))
        keep = rng.random((N, pop, m)) < 0.25
        cand = cand + np.where(keep, 0.0, sgn * mag)
        cand[:, 1] = pf + rng.normal(size=(N, m))
    if start is not None:
        cand[:, 0] = start[:, idx]
    margin = 10.0 ** (-rng.uniform(1, 14, size=(N, pop)))
    _, X, ok = repair(c, cand, P[:, None, :], margin)
    d = np.where(ok, _distance(X, P[:, None, :]), np.inf)
    j = np.argmin(d, axis=1)
    r = np.arange(N)
    best_d = d[r, j]
    best_X = X[r, j]
    best_t = X[r, j][:, idx] if m else best_t
    level = _levels_for(best_d, K)

    if m == 0:
        return level, best_d, best_X

    stall = np.zeros(N, dtype=int)
    active = level < K
    lam = cfg.candidates
    # exponent pattern of the last successful contraction, reused half the time
    memory = np.ones((N, m))
    while active.any():
        A = np.flatnonzero(active)
        t0 = best_t[A]
        d0 = best_d[A]
        scale = np.where(np.isfinite(d0), d0, 1.0)[:, None, None]
        base = np.repeat(t0[:, None, :], lam, axis=1)
        target = pf[A][:, None, :]
        kind = rng.integers(0, 3, size=(len(A), lam, 1))
        # additive log-uniform steps
        step = scale * 10.0 ** (-rng.uniform(0, 12, size=base.shape)) * rng.normal(size=base.shape)
        step *= rng.random(base.shape) < 0.5
        add = base + step
        # contraction towards the target with per-coordinate exponents
        ratio = rng.uniform(0.2, 0.95, size=(len(A), lam, 1))
        expo = rng.choice([0.0, 0.5, 1.0, 2.0], size=base.shape)
        reuse = rng.random((len(A), lam, 1)) < 0.5
        expo = np.where(reuse, memory[A][:, None, :], expo)
        shrink = target + (base - target) * ratio ** expo
        # relative steps
        rel = base * (1.0 + 10.0 ** (-rng.uniform(0, 12, size=base.shape)) * rng.normal(size=base.shape))
        cand = np.where(kind == 0, add, np.where(kind == 1, shrink, rel))
        margin = scale[:, :, 0] * 10.0 ** (-rng.uniform(1, 10, size=(len(A), lam)))
        _, X, ok = repair(c, cand, P[A][:, None, :], margin)
        d = np.where(ok, _distance(X, P[A][:, None, :]), np.inf)
        j = np.argmin(d, axis=1)
        rr = np.arange(len(A))
        dn = d[rr, j]
        better = dn < d0
        upd = A[better]
        was_shrink = better & (kind[rr, j, 0] == 1)
        memory[A[was_shrink]] = expo[rr, j][was_shrink]
        best_d[upd] = dn[better]
        best_X[upd] = X[rr, j][better]
        best_t[upd] = X[rr, j][better][:, idx]
        new_level = _levels_for(best_d[A], K)
        progressed = new_level > level[A]
        level[A] = new_level
        stall[A] = np.where(progressed, 0, stall[A] + 1)
        active[A] = (level[A] < K) & (stall[A] < cfg.stall_steps)
    return level, best_d, best_X


# --------------------------------------------------------------------------
# Separation certificates

RADII = 2.0 ** (-np.arange(0, 61) / 2.0)


def single_box_radius(c: Cell, P: np.ndarray, radii=RADII) -> np.ndarray:
    """Largest radius in ``radii`` whose box around each point is certified empty."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    out = np.zeros(len(P))
    todo = np.ones(len(P), dtype=bool)
    for rho in radii:
        if not todo.any():
            break
        T = np.flatnonzero(todo)
        maybe = box_maybe_meets(c, P[T] - rho, P[T] + rho)
        done = T[~maybe]
        out[done] = rho
        todo[done] = False
    return out


def certify_ball(c: Cell, p: np.ndarray, rho: float, max_boxes: int = 4000) -> bool:
    """Subdivision proof that the open ball B(p, rho) misses the closure of ``c``."""
    p = np.asarray(p, dtype=float)
    lo = (p - rho)[None, :]
    hi = (p + rho)[None, :]
    used = 0
    while len(lo):
        used += len(lo)
        if used > max_boxes:
            return False
        maybe = box_maybe_meets(c, lo, hi)
        # drop boxes outside the ball
        nearest = np.clip(p, lo, hi)
        inside = np.sum((nearest - p) ** 2, axis=1) < rho * rho
        keep = maybe & inside
        lo, hi = lo[keep], hi[keep]
        if not len(lo):
            return True
        w = hi - lo
        axis = np.argmax(w, axis=1)
        mid = (lo[np.arange(len(lo)), axis] + hi[np.arange(len(lo)), axis]) / 2
        lo2, hi2 = lo.copy(), hi.copy()
        hi[np.arange(len(lo)), axis] = mid
        lo2[np.arange(len(lo2)), axis] = mid
        lo = np.vstack([lo, lo2])
        hi = np.vstack([hi, hi2])
    return True


def separation_radius(c: Cell, p, cfg: OracleConfig, upper: float = 1.0) -> float:
    """Largest radius (on a 2^(-1/8) grid below ``upper``) with a certificate; 0 if none."""
    p = np.asarray(p, dtype=float)
    r1 = single_box_radius(c, p[None, :])[0]
    for j in range(0, 8 * 40):
        rho = upper * 2.0 ** (-j / 8)
        if rho <= r1:
            return float(r1)
        if certify_ball(c, p, rho, cfg.cert_boxes):
            lo, hi = rho, rho * 2.0 ** (1 / 8)
            for _ in range(4):
                mid = (lo + hi) / 2
                if certify_ball(c, p, mid, cfg.cert_boxes):
                    lo = mid
                else:
                    hi = mid
            return float(lo)
    return float(r1)


# --------------------------------------------------------------------------
# Public API

def closure_batch(cells: Cell | Sequence[Cell], P: np.ndarray, cfg: OracleConfig,
                  rng: np.random.Generator, fallback: bool = True) -> BatchResult:
    """Closure membership of many points in a cell (or in a union of cells)."""
    if isinstance(cells, Cell):
        cells = [cells]
    P = np.atleast_2d(np.asarray(P, dtype=float))
    N = len(P)
    kind = np.full(N, 2)
    radius = np.full(N, np.inf)
    dist = np.full(N, np.inf)
    witness = np.full(P.shape, np.nan)
    level = np.zeros(N, dtype=int)
    for c in cells:
        todo = kind != 0
        if not todo.any():
            break
        T = np.flatnonzero(todo)
        r = _closure_one(c, P[T], cfg, rng, fallback)
        closer = r.distance < dist[T]
        dist[T[closer]] = r.distance[closer]
        witness[T[closer]] = r.witness[closer]
        level[T] = np.maximum(level[T], r.level)
        yes = r.kind == YES
        kind[T[yes]] = 0
        radius[T] = np.minimum(radius[T], np.where(r.kind == NO, r.radius, 0.0))
    no = (kind != 0) & (radius > 0) & np.isfinite(radius)
    kind[no] = 1
    radius[kind != 1] = 0.0
    return BatchResult(_CODES[kind], dist, radius, witness, level)


def _closure_one(c: Cell, P: np.ndarray, cfg: OracleConfig, rng, fallback: bool) -> BatchResult:
    N = len(P)
    kind = np.full(N, 2)
    dist = np.full(N, np.inf)
    radius = np.zeros(N)
    witness = np.full(P.shape, np.nan)
    level = np.zeros(N, dtype=int)
    if N == 0:
        return BatchResult(_CODES[kind], dist, radius, witness, level)

    inside = contains_array(c, P)
    kind[inside] = 0
    dist[inside] = 0.0
    witness[inside] = P[inside]
    level[inside] = cfg.eps_levels

    T = np.flatnonzero(~inside)
    if len(T):
        rho = single_box_radius(c, P[T])
        cert = rho > 0
        kind[T[cert]] = 1
        radius[T[cert]] = rho[cert]
        T = T[~cert]
    if len(T):
        lv, d, w = witness_search(c, P[T], cfg, rng)
        dist[T] = d
        witness[T] = w
        level[T] = lv
        yes = lv >= cfg.eps_levels
        kind[T[yes]] = 0
        T = T[~yes]
    if fallback:
        for i in T:
            d = dist[i] if np.isfinite(dist[i]) else 1.0
            for rho in (d / 2, d / 16, d / 256):
                if rho > 0 and certify_ball(c, P[i], rho, cfg.cert_boxes):
                    kind[i] = 1
                    radius[i] = rho
                    break
    return BatchResult(_CODES[kind], dist, radius, witness, level)


def closure_contains(c: Cell | Sequence[Cell], p: Sequence[float], cfg: OracleConfig | None = None,
                     seed: int = 0) -> ClosureVerdict:
    """Closure membership of a single point, with witnesses or a separation radius."""
    cfg = cfg or OracleConfig()
    cells = [c] if isinstance(c, Cell) else list(c)
    p = np.asarray(p, dtype=float)
    for cell in cells:
        if p.shape != (ambient(cell),):
            raise ValueError(f"point has {p.size} coordinates, cell lives in R^{ambient(cell)}")
    rng = np.random.default_rng(seed)
    best = np.inf
    for cell in cells:
        if contains_array(cell, p[None, :])[0]:
            return ClosureVerdict(YES, [(2.0 ** -k, p.copy()) for k in range(1, cfg.eps_levels + 1)], None, 0.0)
        chain_, d = _witness_chain(cell, p, cfg, rng)
        best = min(best, d)
        if chain_ is not None:
            return ClosureVerdict(YES, chain_, None, d)
    radii = []
    for cell in cells:
        rad = separation_radius(cell, p, cfg, upper=min(1.0, best) if np.isfinite(best) else 1.0)
        if rad <= 0:
            return ClosureVerdict(UNKNOWN, [], None, best)
        radii.append(rad)
    rad = min(radii)
    box = [[float(x - rad), float(x + rad)] for x in p]
    return ClosureVerdict(NO, [], (rad, box), best)


def _witness_chain(c: Cell, p: np.ndarray, cfg: OracleConfig, rng):
    """One witness per radius 2^-k, each search warm-started from the last."""
    K = cfg.eps_levels
    chain_ = []
    start = None
    best = np.inf
    k = 1
    while k <= K:
        lv, d, w = witness_search(c, p[None, :], cfg, rng, levels=K, start=start)
        best = min(best, float(d[0]))
        if lv[0] < k:
            return None, best
        for kk in range(k, int(lv[0]) + 1):
            chain_.append((2.0 ** -kk, w[0].copy()))
        k = int(lv[0]) + 1
        start = w
    return chain_, best
