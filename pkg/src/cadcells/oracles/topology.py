"""Boundary samples, closure fibers and local boundary connectedness."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..cells import (IN, Cell, Interval1D, Region, Section, Sector, ambient, chain, contains, contains_array, dimension,
                     free_indices, lift, project, sample)
from ..expr import eval_array, eval_point
from ..interval import TRUE, eval_guard_interval
from .closure import UNKNOWN, YES, closure_batch, closure_contains, witness_search
from .config import OracleConfig

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# Boundary

def boundary_sample(c: Cell, n: int, cfg: OracleConfig, rng: np.random.Generator,
                    rays_per_point: int = 4, verify: bool = True) -> np.ndarray:
    """Points of the closure of ``c`` that are not in ``c``.

    Rays are cast from random points of ``c`` in free-coordinate space; the
    exit parameter is located by bisection and the limit point is read off
    just before the exit.  Exits where a bound diverges are dropped.  With
    ``verify`` every returned point has a witness chain and is not in ``c``.
    May return fewer than ``n`` points.
    """
    if n < 1:
        raise ValueError("n must be positive")
    idx = free_indices(c)
    m = len(idx)
    if m == 0:
        return np.zeros((0, ambient(c)))
    S = sample(c, max(n // rays_per_point, 8) * 2, rng, box=cfg.box)
    if not len(S):
        return np.zeros((0, ambient(c)))
    theta = np.repeat(S[:, idx], rays_per_point, axis=0)
    d = rng.normal(size=theta.shape)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    # bracket the exit: s_ok valid, s_bad invalid
    s_ok = np.zeros(len(theta))
    s_bad = np.full(len(theta), np.nan)
    s = 1e-3
    while s < 4 * cfg.box and np.isnan(s_bad).any():
        X, ok = lift(c, theta + s * d)
        ok &= np.all(np.abs(X) < 1e6, axis=1)
        first_bad = np.isnan(s_bad) & ~ok
        s_bad[first_bad] = s
        s_ok = np.where(np.isnan(s_bad) & ok, s, s_ok)
        s *= 2
    hit = ~np.isnan(s_bad)
    theta, d, s_ok, s_bad = theta[hit], d[hit], s_ok[hit], s_bad[hit]
    for _ in range(60):
        mid = (s_ok + s_bad) / 2
        _, ok = lift(c, theta + mid[:, None] * d)
        s_ok = np.where(ok, mid, s_ok)
        s_bad = np.where(ok, s_bad, mid)
    theta_in = theta + s_ok[:, None] * d
    theta_out = theta + s_bad[:, None] * d
    if _region_of(c) is not None:
        s_reg, h = _region_exit(c, theta, d, s_bad)
        inner = s_reg < s_ok
        theta_in[inner] = theta[inner] + s_reg[inner, None] * d[inner]
        theta_out[inner] = _round_small(theta[inner] + (s_reg + h)[inner, None] * d[inner])
    X = _snap(c, theta_in, theta_out)
    keep = np.all(np.isfinite(X), axis=1) & np.all(np.abs(X) < 1e3, axis=1)
    X = X[keep]
    X = X[~contains_array(c, X)]
    if verify and len(X):
        X = X[[contains(c, x, cfg.width_floor) != IN for x in X]]
        res = closure_batch(c, X, cfg, rng, fallback=False)
        X = X[res.kind == YES]
    if len(X) < n:
        log.warning("boundary_sample: %d of %d requested points", len(X), n)
    return X[:n]


def _region_of(c: Cell):
    for level in chain(c):
        if isinstance(level, Region):
            return level
    return None


def _region_boxes_true(reg: Region, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Interval certificate that the segments A->B (region coordinates) stay in the region."""
    lo, hi = np.minimum(A, B), np.maximum(A, B)
    return eval_guard_interval(reg.guard, lo, hi) == TRUE


def _region_exit(c: Cell, theta, d, s_max, h_min: float = 2.0 ** -44):
    """First parameter where the ray leaves the region level, certified up to ``h``.

    Point sampling misses measure-zero cuts (a slit); hull boxes of ray
    pieces do not.
    """
    reg = _region_of(c)
    k = reg.dim
    t0, dd = theta[:, :k], d[:, :k]
    s = np.zeros(len(theta))
    h = np.full(len(theta), 1e-3)
    done = np.zeros(len(theta), dtype=bool)
    for _ in range(4000):
        act = np.flatnonzero(~done)
        if not len(act):
            break
        a = t0[act] + s[act, None] * dd[act]
        b = t0[act] + (s[act] + h[act])[:, None] * dd[act]
        ok = _region_boxes_true(reg, a, b)
        s[act[ok]] += h[act[ok]]
        h[act[ok]] *= 2
        h[act[~ok]] /= 2
        done[act] = (h[act] < h_min) | (s[act] >= s_max[act])
    return np.minimum(s, s_max), h


def _round_small(theta, tol: float = 1e-11):
    # exits found by interval refinement sit within ~1e-13 of a cut; snap
    # coordinates that are that close to a dyadic grid value onto it
    g = np.round(theta * 2.0 ** 30) / 2.0 ** 30
    return np.where(np.abs(theta - g) < tol, g, theta)


def _snap(c: Cell, theta_in: np.ndarray, theta_out: np.ndarray) -> np.ndarray:
    """Limit point of an exit.

    Free coordinates come from just past the exit, with sector and interval
    coordinates clamped into their closed ranges; section coordinates are
    the limits read off at the last point inside.
    """
    X_in, _ = lift(c, theta_in)
    X, _ = lift(c, theta_out)
    j = 0
    with np.errstate(all="ignore"):
        for level in chain(c):
            k = ambient(level) - 1
            match level:
                case Interval1D(lo=lo, hi=hi):
                    if lo is not None:
                        X[:, 0] = np.maximum(X[:, 0], eval_point(lo, ()))
                    if hi is not None:
                        X[:, 0] = np.minimum(X[:, 0], eval_point(hi, ()))
                    j += 1
                case Region(dim=dd):
                    j += dd
                case Section():
                    X[:, k] = X_in[:, k]
                case Sector(lo=lo, hi=hi):
                    for b, fn in ((lo, np.maximum), (hi, np.minimum)):
                        if b is not None:
                            v = eval_array(b, X_in[:, :k])
                            X[:, k] = np.where(np.isfinite(v), fn(X[:, k], v), X[:, k])
                    j += 1
    return X


# --------------------------------------------------------------------------
# Fibers

@dataclass
class FiberDescription:
    basepoint: list
    segments: list = field(default_factory=list)        # [(lo, hi), ...]
    isolated_points: list = field(default_factory=list)
    unbounded: list = field(default_factory=list)       # per segment: (below, above)

    def to_dict(self) -> dict:
        return {"basepoint": list(map(float, self.basepoint)),
                "segments": [[float(a), float(b)] for a, b in self.segments],
                "isolated_points": [float(t) for t in self.isolated_points],
                "unbounded": [list(u) for u in self.unbounded]}

    def matches(self, other: "FiberDescription", tol: float) -> bool:
        if len(self.segments) != len(other.segments) or len(self.isolated_points) != len(other.isolated_points):
            return False
        seg = all(abs(a - c) <= tol and abs(b - d) <= tol
                  for (a, b), (c, d) in zip(self.segments, other.segments))
        iso = all(abs(a - b) <= tol for a, b in zip(self.isolated_points, other.isolated_points))
        return seg and iso


def fiber(c: Cell, x, cfg: OracleConfig, rng: np.random.Generator, check_base: bool = True) -> FiberDescription:
    """Closure of ``c`` intersected with the vertical line over ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (ambient(c) - 1,):
        raise ValueError(f"basepoint must have {ambient(c) - 1} coordinates")
    if check_base:
        v = closure_contains(project(c), x, cfg, seed=int(rng.integers(1 << 31)))
        if v.kind != YES:
            raise ValueError(f"basepoint {x.tolist()} is not in the closure of the base ({v.kind})")
    L, step = cfg.scan_limit, cfg.tau_scan
    grid = np.arange(-L, L + step / 2, step)
    P = np.column_stack([np.repeat(x[None, :], len(grid), axis=0), grid])
    k_near = math.ceil(math.log2(1.0 / (0.75 * step)))
    lv, dist, _ = witness_search(c, P, cfg, rng, levels=k_near)
    near = lv >= k_near

    desc = FiberDescription(list(x))
    # the shallow scan stalls at scattered points; short gaps are decided by the full oracle
    runs = _merge_runs(_runs(near), gap=8)
    for a, b in runs:
        res = closure_batch(c, P[a:b + 1], cfg, rng, fallback=False)
        yes = _propagate(c, P[a:b + 1], res, cfg, rng)
        sub = [(a + i, a + j) for i, j in _runs(yes)]
        segs = [(i, j) for i, j in sub if j > i]
        for i, j in segs:
            lo = _refine_end(c, x, grid[i], grid[i - 1] if i > 0 else None, cfg, rng)
            hi = _refine_end(c, x, grid[j], grid[j + 1] if j + 1 < len(grid) else None, cfg, rng)
            desc.segments.append((lo, hi))
            desc.unbounded.append((i == 0, j == len(grid) - 1))
        if not segs:
            start = None
            if yes.any():
                i = int(np.flatnonzero(yes)[np.argmin(res.distance[yes])])
                t0, start = grid[a + i], res.witness[i]
            else:
                t0 = grid[a + int(np.argmin(dist[a:b + 1]))]
            t = _locate_isolated(c, x, t0, cfg, rng, start)
            if t is not None:
                desc.isolated_points.append(t)
    desc.segments.sort()
    desc.isolated_points.sort()
    return desc


def _propagate(c, P, res, cfg, rng, sweeps: int = 3) -> np.ndarray:
    """YES mask of a scan run, retrying unsettled points from their neighbours' witnesses.

    Near cusps the free search stalls while a neighbour's witness, moved to
    the new height, is already close.
    """
    yes = res.kind == YES
    W = res.witness.copy()
    open_ = res.kind == UNKNOWN
    for _ in range(sweeps):
        progress = False
        for order in (range(1, len(P)), range(len(P) - 2, -1, -1)):
            for i in order:
                j = i - 1 if order.step == 1 else i + 1
                if not open_[i] or not yes[j]:
                    continue
                start = W[j].copy()
                start[-1] = P[i, -1]
                lv, _, w = witness_search(c, P[i:i + 1], cfg, rng, start=start[None, :])
                if lv[0] >= cfg.eps_levels:
                    yes[i], open_[i], W[i] = True, False, w[0]
                    progress = True
        if not progress:
            break
    return yes


def _merge_runs(runs, gap: int):
    out = []
    for a, b in runs:
        if out and a - out[-1][1] - 1 <= gap:
            out[-1] = (out[-1][0], b)
        else:
            out.append((a, b))
    return out


def _runs(mask) -> list[tuple[int, int]]:
    out = []
    start = None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        if not v and start is not None:
            out.append((start, i - 1))
            start = None
    if start is not None:
        out.append((start, len(mask) - 1))
    return out


def _refine_end(c, x, t_in, t_out, cfg, rng) -> float:
    if t_out is None:
        return float(t_in)
    while abs(t_out - t_in) > cfg.tau_fib / 2:
        mid = (t_in + t_out) / 2
        r = closure_batch(c, np.append(x, mid)[None, :], cfg, rng, fallback=False)
        if r.kind[0] == YES:
            t_in = mid
        else:
            t_out = mid
    return float(t_in)


def _locate_isolated(c, x, t0, cfg, rng, start=None):
    # cusp-like approaches can stall the deepest search; fall back to shallower radii
    deepest = math.ceil(math.log2(4.0 / cfg.tau_fib))
    for levels in sorted({deepest, max(cfg.eps_levels, 2)}, reverse=True):
        t = _iterate_witness(c, x, float(t0), cfg.with_(eps_levels=levels), cfg.tau_fib, rng, start)
        if t is not None:
            return t
    return None


def _iterate_witness(c, x, t, deep, tau, rng, start=None):
    # a witness height is only an estimate: keep the last height the oracle confirms
    def confirmed(u):
        return closure_batch(c, np.append(x, u)[None, :], deep, rng, fallback=False).kind[0] == YES

    best = t if confirmed(t) else None
    for _ in range(8):
        hint = None if start is None else start[None, :]
        _, _, w = witness_search(c, np.append(x, t)[None, :], deep, rng, start=hint)
        if not np.all(np.isfinite(w[0])):
            break
        start = w[0]
        t_new = float(w[0, -1])
        moved = abs(t_new - t) > tau / 8
        if moved and confirmed(t_new):
            best = t_new
        t = t_new
        if not moved:
            break
    return best


# --------------------------------------------------------------------------
# Local boundary connectedness

@dataclass
class LbcResult:
    verdict: str                      # "fails-lbc" or "consistent-with-lbc"
    counts: list                      # [(eps, components), ...]
    witness_pairs: list = field(default_factory=list)  # [(eps, a, b), ...]


def ball_sample(c: Cell, p, eps: float, n: int, cfg: OracleConfig, rng) -> np.ndarray:
    """Points of ``c`` inside the ball B(p, eps), spread by aiming at random targets."""
    p = np.asarray(p, dtype=float)
    dim = ambient(c)
    u = rng.normal(size=(n, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    T = p + u * eps * rng.random((n, 1)) ** (1.0 / dim)
    levels = math.ceil(math.log2(8.0 / eps))
    _, _, W = witness_search(c, T, cfg, rng, levels=levels)
    ok = np.all(np.isfinite(W), axis=1)
    W = W[ok]
    W = W[np.linalg.norm(W - p, axis=1) < eps]
    return W[contains_array(c, W)]


def _components(c: Cell, W, p, eps, cfg, path_points: int = 8):
    idx = free_indices(c)
    N = len(W)
    d = max(dimension(c), 1)
    spacing = 2 * eps / N ** (1.0 / d)
    radius = cfg.radius_factor * spacing
    diff = W[:, None, :] - W[None, :, :]
    close = np.linalg.norm(diff, axis=-1) < radius
    i, j = np.nonzero(np.triu(close, 1))
    if len(i):
        s = np.linspace(0, 1, path_points + 2)[1:-1]
        th = W[i][:, None, idx] * (1 - s)[None, :, None] + W[j][:, None, idx] * s[None, :, None]
        X, ok = lift(c, th)
        ok &= np.linalg.norm(X - p, axis=-1) < eps
        good = ok.all(axis=1)
        reg = _region_of(c)
        if reg is not None:
            # pieces of the path, certified with interval guards
            s2 = np.linspace(0, 1, 4 * path_points + 1)
            A, B = W[i][:, :reg.dim], W[j][:, :reg.dim]
            pts = A[:, None, :] * (1 - s2)[None, :, None] + B[:, None, :] * s2[None, :, None]
            good &= _region_boxes_true(reg, pts[:, :-1], pts[:, 1:]).all(axis=1)
        i, j = i[good], j[good]
    g = coo_matrix((np.ones(len(i)), (i, j)), shape=(N, N))
    return connected_components(g, directed=False)


def locally_boundary_connected_at(c: Cell, p, cfg: OracleConfig, rng: np.random.Generator,
                                  eps_schedule=None, n: int = 400, min_share: float = 0.05,
                                  persist: int = 3) -> LbcResult:
    """Count components of B(p, eps) ∩ c along a decreasing radius schedule.

    Components holding less than ``min_share`` of the samples are ignored.
    ``fails-lbc`` needs at least two components at ``persist`` consecutive
    radii; otherwise the result is only *consistent* with connectedness.
    """
    p = np.asarray(p, dtype=float)
    if contains(c, p, cfg.width_floor) == IN:
        raise ValueError("point lies in the cell, not on its boundary")
    if closure_contains(c, p, cfg, seed=int(rng.integers(1 << 31))).kind != YES:
        raise ValueError("point is not in the closure of the cell")
    eps_schedule = eps_schedule or [2.0 ** -k for k in range(2, 8)]
    counts, pairs = [], []
    streak = best_streak = 0
    for eps in eps_schedule:
        W = ball_sample(c, p, eps, n, cfg, rng)
        if len(W) < 10:
            counts.append((eps, 0))
            streak = 0
            continue
        _, labels = _components(c, W, p, eps, cfg)
        sizes = np.bincount(labels)
        big = np.flatnonzero(sizes >= min_share * len(W))
        counts.append((eps, int(len(big))))
        if len(big) >= 2:
            order = big[np.argsort(-sizes[big])]
            a = W[labels == order[0]][0]
            b = W[labels == order[1]][0]
            pairs.append((eps, a.tolist(), b.tolist()))
            streak += 1
        else:
            streak = 0
        best_streak = max(best_streak, streak)
    verdict = "fails-lbc" if best_streak >= persist else "consistent-with-lbc"
    return LbcResult(verdict, counts, pairs)
