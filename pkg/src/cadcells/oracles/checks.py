"""Sampled checkers for closure finiteness, well-borderedness and friends.

Every checker returns a :class:`CheckReport`.  Checkers are pure functions
of their inputs, the config and the generator they are handed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .. import expr as E
from ..cells import Cell, IN, OrderingError, Section, Sector, ambient, check_stack_order, contains, \
    contains_array, dimension, sample, box_maybe_meets, free_indices, lift
from .closure import NO, UNKNOWN, YES, closure_batch, closure_contains
from .config import OracleConfig
from .topology import boundary_sample, fiber

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
MAX_LISTED = 25


@dataclass
class CheckReport:
    suite: str
    check: str
    paper_anchor: str
    seed: int
    samples: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    violation_count: int = 0
    inconclusive_fraction: float = 0.0
    verdict: str = PASS
    millis: int | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "check": self.check, "paper_anchor": self.paper_anchor,
                "seed": self.seed, "samples": self.samples, "violations": self.violations,
                "violation_count": self.violation_count,
                "inconclusive_fraction": self.inconclusive_fraction, "verdict": self.verdict,
                "millis": self.millis, "details": self.details}


class _Tally:
    """Collects violations and unknowns while a checker runs."""

    def __init__(self):
        self.violations = []
        self.unknown = 0
        self.total = 0
        self.samples = {}
        self.t0 = time.perf_counter()

    def add(self, point, **sub):
        pt = [float(x) for x in np.atleast_1d(point)]
        self.violations.append({"point": pt, "sub_verdicts": {k: _plain(v) for k, v in sub.items()}})

    def count(self, name, n):
        self.samples[name] = self.samples.get(name, 0) + int(n)

    def report(self, cfg, suite, check, anchor, seed, details=None, force=None) -> CheckReport:
        frac = self.unknown / self.total if self.total else 0.0
        viol = sorted(self.violations, key=lambda v: (v["point"], sorted(v["sub_verdicts"].items(), key=str)))
        if viol:
            verdict = FAIL
        elif frac >= cfg.inconclusive_cap and self.total:
            verdict = INCONCLUSIVE
        else:
            verdict = PASS
        if force is not None and verdict == PASS:
            verdict = force
        return CheckReport(suite, check, anchor, seed, dict(sorted(self.samples.items())), viol[:MAX_LISTED],
                           len(viol), round(frac, 6), verdict,
                           int(1000 * (time.perf_counter() - self.t0)), details or {})


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _dedup_closure(cells, P, cfg, rng, fallback=True):
    """closure_batch on the distinct rows of ``P`` (0-cells repeat one point)."""
    if not len(P):
        return np.array([], dtype=object)
    U, inv = np.unique(P, axis=0, return_inverse=True)
    res = closure_batch(cells, U, cfg, rng, fallback=fallback)
    return res.kind[inv.ravel()]


# 2^-48 is about the spacing of doubles of magnitude 8 (the sampling box)
DEEP_LEVELS = 48


def _deep(cfg: OracleConfig) -> OracleConfig:
    return cfg.with_(eps_levels=max(cfg.eps_levels, min(cfg.eps_levels + 28, DEEP_LEVELS)))


def _recheck_yes(cells, P, cfg, rng):
    """Re-run ``yes`` answers that would be violations at a much finer radius floor.

    Steep bounds put some honest non-closure points within 2^-20 of the
    closure; the deep run separates them.
    """
    return _dedup_closure(cells, P, _deep(cfg), rng, fallback=True)


def _per_cell(n: int, cells: Sequence) -> int:
    return max(1, math.ceil(n / max(len(cells), 1)))


def sample_in_box(c: Cell, n: int, cfg: OracleConfig, rng, rounds: int = 20) -> np.ndarray:
    """Points of ``c`` inside the sampling box [-box, box]^n.

    Far outside the box a double cannot resolve distances near the
    closure radius floor, so such points are not used as probes.
    """
    out = np.zeros((0, ambient(c)))
    for _ in range(rounds):
        need = n - len(out)
        if need <= 0:
            break
        X = sample(c, 2 * need, rng, box=cfg.box)
        X = X[np.all(np.abs(X) <= cfg.box, axis=1)]
        out = np.vstack([out, X[:need]])
    return out


def sample_resolvable(c: Cell, n: int, cfg: OracleConfig, rng, rounds: int = 20) -> tuple[np.ndarray, int]:
    """Box samples of ``c`` at least the radius floor inside the cell.

    A point closer than 2^-K to its own cell's boundary sits within 2^-K of
    lower cells, so a closure verdict at that floor says nothing about it.
    Returns the points and the number of draws set aside.
    """
    out = np.zeros((0, ambient(c)))
    dropped = 0
    for _ in range(rounds):
        need = n - len(out)
        if need <= 0:
            break
        X = sample_in_box(c, need, cfg, rng)
        ok = _robustly_inside(c, X, cfg.eps_min, relative=False)
        dropped += int(np.sum(~ok))
        out = np.vstack([out, X[ok]])
    return out[:n], dropped


def _sample_cells(cells, n, cfg, rng, tally=None):
    """Per-cell box samples; with a tally, resolvable samples only (set-asides counted)."""
    if tally is None:
        return [(c, sample_in_box(c, _per_cell(n, cells), cfg, rng)) for c in cells]
    out = []
    for c in cells:
        X, dropped = sample_resolvable(c, _per_cell(n, cells), cfg, rng)
        tally.count("resolution_limited", dropped)
        out.append((c, X))
    return out


# --------------------------------------------------------------------------
# Closure decompositions and CF

def _decomposition(tally, targets, parts, cad_cells, cfg, rng, n, tag=None):
    """Two-sided sampled test of closure(targets) = union(parts)."""
    part_ids = {id(p) for p in parts}
    extra = {"claim": tag} if tag else {}
    # (a) every part point is a closure point
    for c, X in _sample_cells(parts, n, cfg, rng):
        kind = _dedup_closure(targets, X, cfg, rng)
        tally.count("part_points", len(X))
        tally.total += len(X)
        tally.unknown += int(np.sum(kind == UNKNOWN))
        for x in X[kind == NO]:
            tally.add(x, side="part-point", cell=c.label, closure=NO, **extra)
    # (b) every closure point among the other cells is a violation
    others = [c for c in cad_cells if id(c) not in part_ids]
    for c, X in _sample_cells(others, n, cfg, rng, tally):
        kind = _dedup_closure(targets, X, cfg, rng)
        tally.count("other_points", len(X))
        tally.total += len(X)
        sus = kind == YES
        if sus.any():
            kind[sus] = _recheck_yes(targets, X[sus], cfg, rng)
        tally.unknown += int(np.sum(kind == UNKNOWN))
        for x in X[kind == YES]:
            tally.add(x, side="outside-parts", cell=c.label, closure=YES, **extra)


def check_closure_decomposition(c, parts: Sequence[Cell], cad_cells: Sequence[Cell], cfg: OracleConfig,
                                rng: np.random.Generator, suite: str = "", check: str = "closure",
                                anchor: str = "", seed: int = 0) -> CheckReport:
    """Is the closure of ``c`` (a cell or a union of cells) the union of ``parts``?

    Side (a) samples the parts and asks for closure membership; side (b)
    samples the remaining cells of the decomposition and asks for the
    opposite.  ``cfg.samples`` points per side.
    """
    targets = [c] if isinstance(c, Cell) else list(c)
    tally = _Tally()
    _decomposition(tally, targets, parts, cad_cells, cfg, rng, cfg.samples)
    details = {"cells": [t.label for t in targets], "parts": sorted(p.label for p in parts)}
    return tally.report(cfg, suite, check, anchor, seed, details)


def check_cf(cad_cells: Sequence[Cell], claims: Sequence, cfg: OracleConfig, rng: np.random.Generator,
             suite: str = "", check: str = "cf", anchor: str = "", seed: int = 0) -> CheckReport:
    """Closure-finiteness: ``claims`` is a list of ``(cells, parts)``.

    Top-level cells without a claim make the report inconclusive.
    """
    tally = _Tally()
    per = []
    covered = set()
    for targets, parts in claims:
        targets = [targets] if isinstance(targets, Cell) else list(targets)
        covered.update(id(t) for t in targets)
        before, unk0, tot0 = len(tally.violations), tally.unknown, tally.total
        seen0 = dict(tally.samples)
        tag = "+".join(t.label for t in targets)
        _decomposition(tally, targets, parts, cad_cells, cfg, rng, cfg.samples, tag=tag)
        tot = tally.total - tot0
        per.append({"cells": tag, "parts": sorted(p.label for p in parts),
                    "part_points": tally.samples.get("part_points", 0) - seen0.get("part_points", 0),
                    "other_points": tally.samples.get("other_points", 0) - seen0.get("other_points", 0),
                    "violations": len(tally.violations) - before,
                    "inconclusive_fraction": round((tally.unknown - unk0) / tot, 6) if tot else 0.0})
    missing = sorted(c.label for c in cad_cells if id(c) not in covered)
    details = {"claims": per, "missing": missing}
    return tally.report(cfg, suite, check, anchor, seed, details, force=INCONCLUSIVE if missing else None)


# --------------------------------------------------------------------------
# WB

def _boundary_equivalence(tally, D, cover, cad_cells, cfg, rng, n, tag):
    """Sampled test of  closure(D) minus D  =  union of closures of ``cover``."""
    for c, X in _sample_cells(cad_cells, n, cfg, rng, tally):
        tally.count("points", len(X))
        tally.total += len(X)
        in_cover = _dedup_closure(cover, X, cfg, rng) if cover else np.full(len(X), NO, dtype=object)
        if c is D:
            tally.unknown += int(np.sum(in_cover == UNKNOWN))
            for x in X[in_cover == YES]:
                tally.add(x, claim=tag, cell=c.label, issue="cover meets the cell itself")
            continue
        in_bd = _dedup_closure([D], X, cfg, rng)
        # a yes on one side against a no on the other must survive a deep re-run
        a = (in_bd == YES) & (in_cover == NO)
        b = (in_bd == NO) & (in_cover == YES)
        if a.any():
            in_bd[a] = _recheck_yes([D], X[a], cfg, rng)
        if b.any() and cover:
            in_cover[b] = _recheck_yes(cover, X[b], cfg, rng)
        unk = (in_bd == UNKNOWN) | (in_cover == UNKNOWN)
        tally.unknown += int(np.sum(unk))
        bad = ~unk & (in_bd != in_cover)
        for x, u, v in zip(X[bad], in_bd[bad], in_cover[bad]):
            tally.add(x, claim=tag, cell=c.label, boundary=u, cover=v)


def check_wb(cad_cells: Sequence[Cell], claims: Sequence[dict], cfg: OracleConfig, rng: np.random.Generator,
             suite: str = "", check: str = "wb", anchor: str = "", seed: int = 0,
             samples: int | None = None) -> CheckReport:
    """Well-borderedness claims.

    A claim is ``{"cell": D, "family": [cells]}`` (boundary of D is the union
    of closures of the family, all of dimension d-1) or
    ``{"cell": D, "violation": [cells]}``: the boundary of D is the union of
    closures of the listed cells, all of dimension at most d-2, and no
    (d-1)-cell meets it.  A violation claim passes when the violation is
    confirmed.
    """
    n = samples or cfg.samples
    tally = _Tally()
    per = []
    for claim in claims:
        D = claim["cell"]
        d = dimension(D)
        before, unk0, tot0 = len(tally.violations), tally.unknown, tally.total
        if "violation" in claim:
            cover = list(claim["violation"])
            dims = [dimension(x) for x in cover]
            if any(k > d - 2 for k in dims):
                tally.add([], claim=D.label, issue="cover has a cell of dimension d-1 or more", dims=dims)
            _boundary_equivalence(tally, D, cover, cad_cells, cfg, rng, n, D.label)
            codim1 = [x for x in cad_cells if dimension(x) == d - 1 and x is not D]
            hits = 0
            for c, X in _sample_cells(codim1, n, cfg, rng, tally):
                kind = _dedup_closure([D], X, cfg, rng)
                sus = kind == YES
                if sus.any():
                    kind[sus] = _recheck_yes([D], X[sus], cfg, rng)
                tally.count("codim1_points", len(X))
                tally.total += len(X)
                tally.unknown += int(np.sum(kind == UNKNOWN))
                for x in X[kind == YES]:
                    hits += 1
                    tally.add(x, claim=D.label, cell=c.label, issue="(d-1)-cell meets the boundary")
            entry = {"cell": D.label, "kind": "violation", "d": d, "cover": [x.label for x in cover],
                     "cover_dims": dims, "max_cover_dim": max(dims) if dims else -1,
                     "codim1_cells": sorted(x.label for x in codim1)}
        else:
            family = list(claim["family"])
            dims = [dimension(x) for x in family]
            if any(k != d - 1 for k in dims):
                tally.add([], claim=D.label, issue="family cell of wrong dimension", dims=dims)
            _boundary_equivalence(tally, D, family, cad_cells, cfg, rng, n, D.label)
            entry = {"cell": D.label, "kind": "family", "d": d, "family": [x.label for x in family]}
        tot = tally.total - tot0
        entry["violations"] = len(tally.violations) - before
        entry["inconclusive_fraction"] = round((tally.unknown - unk0) / tot, 6) if tot else 0.0
        per.append(entry)
    return tally.report(cfg, suite, check, anchor, seed, {"claims": per})


# --------------------------------------------------------------------------
# Sandwich

def sandwich_cells(base: Cell, f1, f2, f3):
    A = Sector(base, f1, f2, label="A", index=tuple(base.index) + (1,))
    B = Section(base, f2, label="B", index=tuple(base.index) + (2,))
    C = Sector(base, f2, f3, label="C", index=tuple(base.index) + (3,))
    return A, B, C


def check_sandwich(base: Cell, f1, f2, f3, probes: Sequence[dict], cfg: OracleConfig,
                   rng: np.random.Generator, suite: str = "", check: str = "sandwich", anchor: str = "",
                   seed: int = 0) -> CheckReport:
    """Consecutive cells A < B < C over ``base``: sampled inclusion of B's points in
    the closures of A and C, then classification of probe points.

    A probe is ``{"point": p, "expect": {"A": "yes", ...}, "min_radius": {"B": r}}``.
    ``f1``/``f3`` may be None (minus/plus infinity).
    """
    tally = _Tally()
    bounds = [b for b in (f1, f2, f3) if b is not None]
    if len(bounds) > 1:
        try:
            check_stack_order(base, bounds, rng)
        except OrderingError as exc:
            tally.add([], issue="ordering", message=str(exc))
            return tally.report(cfg, suite, check, anchor, seed)
    A, B, C = sandwich_cells(base, f1, f2, f3)
    X = sample_in_box(B, cfg.samples, cfg, rng)
    tally.count("section_points", len(X))
    for name, cell in (("A", A), ("C", C)):
        kind = _dedup_closure([cell], X, cfg, rng)
        tally.total += len(X)
        tally.unknown += int(np.sum(kind == UNKNOWN))
        for x in X[kind == NO]:
            tally.add(x, issue=f"section point outside closure of {name}", closure=NO)
    classified = []
    for probe in probes:
        p = np.asarray(probe["point"], dtype=float)
        row = {"point": p.tolist()}
        for name, cell in (("A", A), ("B", B), ("C", C)):
            v = closure_contains(cell, p, cfg, seed=int(rng.integers(1 << 31)))
            row[name] = v.kind
            if v.kind == NO:
                row[name + "_radius"] = v.separation[0]
            tally.total += 1
            tally.unknown += v.kind == UNKNOWN
            want = probe.get("expect", {}).get(name)
            if want is not None and v.kind != UNKNOWN and v.kind != want:
                tally.add(p, probe=name, got=v.kind, expected=want)
            need = probe.get("min_radius", {}).get(name)
            if need is not None and v.kind == NO and v.separation[0] < need:
                tally.add(p, probe=name, issue="separation radius below bound",
                          radius=v.separation[0], bound=need)
        classified.append(row)
    tally.count("probes", len(probes))
    return tally.report(cfg, suite, check, anchor, seed, {"probes": classified})


# --------------------------------------------------------------------------
# Maps

def apply_map(exprs: Sequence, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.column_stack([E.eval_array(e, X) for e in exprs])


def _closure_samples(c: Cell, n: int, cfg, rng, boundary_share: float = 0.2):
    nb = max(1, int(n * boundary_share))
    X = sample_in_box(c, n - nb, cfg, rng)
    B = boundary_sample(c, nb, cfg, rng)
    return X, B


def _well_conditioned(c: Cell, B: np.ndarray, tau: float, ulps: int = 16) -> np.ndarray:
    """Boundary samples whose position is known to ``tau``.

    A sample is the lift of chart coordinates that carry a few ulps of error;
    where the lift is steep (a bound with cancellation near a pole, say) that
    error is amplified beyond ``tau`` and the sample is not usable as a
    boundary point.  Slopes are one-sided differences towards the cell; a
    coordinate along which neither shift stays in the cell is skipped.
    """
    B = np.asarray(B, dtype=float)
    idx = free_indices(c)
    if not len(B) or not idx:
        return np.ones(len(B), dtype=bool)
    theta = B[:, idx]
    scale = np.maximum(1.0, np.abs(theta))
    worst = np.zeros(len(B))
    for i in range(len(idx)):
        h = 1e-7 * scale[:, i]
        slope = np.full(len(B), np.inf)
        for sign in (1.0, -1.0):
            th = theta.copy()
            th[:, i] += sign * h
            X, ok = lift(c, th)
            with np.errstate(invalid="ignore"):
                dq = np.max(np.abs(X - B), axis=1) / h
            slope = np.where(ok & np.isfinite(dq), np.minimum(slope, dq), slope)
        slope[np.isinf(slope)] = 0.0
        worst = np.maximum(worst, slope * scale[:, i])
    return worst * ulps * np.finfo(float).eps <= tau


def _robustly_inside(c: Cell, Q: np.ndarray, tau: float, relative: bool = True) -> np.ndarray:
    """Points of ``c`` whose free coordinates stay valid under shifts of size tau
    (relative to max(1, |coordinate|) unless ``relative`` is False)."""
    Q = np.asarray(Q, dtype=float)
    inside = contains_array(c, Q, atol=tau)
    idx = free_indices(c)
    if not idx or not len(Q):
        return inside
    m = len(idx)
    q = Q[:, idx]
    d = tau * (np.maximum(1.0, np.abs(q)) if relative else np.ones_like(q))
    eye = np.eye(m)
    shifts = np.concatenate([q[:, None, :] + d[:, None, :] * eye, q[:, None, :] - d[:, None, :] * eye], axis=1)
    return inside & lift(c, shifts)[1].all(axis=1)


def check_homeo_pair(fwd: Sequence, inv: Sequence, X: Cell, Y: Cell, cfg: OracleConfig,
                     rng: np.random.Generator, suite: str = "", check: str = "homeo", anchor: str = "",
                     seed: int = 0, probes: Sequence[dict] = ()) -> CheckReport:
    """Sampled checks that ``fwd: X -> Y`` and ``inv`` are mutually inverse on the
    closures and respect cells and boundaries.

    ``probes`` are exact point checks ``{"map": "fwd"|"inv", "point": p, "value": q}``.
    """
    tally = _Tally()
    tau = cfg.tau_homeo
    worst = {"inv_fwd": 0.0, "fwd_inv": 0.0}
    for name, (src, dst, f, g) in {"X": (X, Y, fwd, inv), "Y": (Y, X, inv, fwd)}.items():
        S, Bd = _closure_samples(src, cfg.samples, cfg, rng)
        P = np.vstack([S, Bd])
        tally.count(f"{name}_points", len(S))
        tally.count(f"{name}_boundary_points", len(Bd))
        Q = apply_map(f, P)
        R = apply_map(g, Q)
        err = np.max(np.abs(R - P), axis=1)
        err = np.where(np.isnan(err), np.inf, err)
        key = "inv_fwd" if name == "X" else "fwd_inv"
        worst[key] = float(np.max(err)) if len(err) else 0.0
        tally.total += len(P)
        for p, e in zip(P[err > tau], err[err > tau]):
            tally.add(p, issue=f"round trip from {name}", error=e)
        # cells to cells, up to the rounding of the maps: an image counts as
        # outside only when a box of half-width tau around it misses the cell
        QS = Q[:len(S)]
        ok = contains_array(dst, QS)
        bad = np.flatnonzero(~ok)
        if len(bad):
            d = tau * np.maximum(1.0, np.abs(QS[bad]))
            meets = box_maybe_meets(dst, QS[bad] - d, QS[bad] + d)
            for i in bad[~meets]:
                tally.add(S[i], issue=f"image of a {name} point is not in the other cell")
        # boundary to boundary, on the samples whose position is resolved
        sharp = _well_conditioned(src, Bd, tau)
        tally.count("resolution_limited", int(np.sum(~sharp)))
        Bd, QB = Bd[sharp], Q[len(S):][sharp]
        if len(Bd):
            kind = _dedup_closure([dst], QB, cfg, rng)
            tally.total += len(QB)
            tally.unknown += int(np.sum(kind == UNKNOWN))
            for p, k in zip(Bd[kind == NO], kind[kind == NO]):
                tally.add(p, issue=f"image of a {name} boundary point is not a closure point", closure=k)
            inside = _robustly_inside(dst, QB, tau)
            for p in Bd[inside]:
                tally.add(p, issue=f"image of a {name} boundary point lies in the other cell")
    values = []
    for probe in probes:
        f = fwd if probe["map"] == "fwd" else inv
        got = apply_map(f, np.asarray(probe["point"], dtype=float)[None, :])[0]
        want = np.asarray(probe["value"], dtype=float)
        values.append({"map": probe["map"], "point": list(map(float, probe["point"])), "value": got.tolist()})
        same = np.array_equal(got, want) if probe.get("exact") else bool(np.all(np.abs(got - want) <= tau))
        if not same:
            tally.add(probe["point"], issue="probe value", got=got, expected=want)
    return tally.report(cfg, suite, check, anchor, seed, {"max_round_trip_error": worst, "probes": values})


def check_identity(lhs: Sequence, rhs: Sequence, domain: Cell, cfg: OracleConfig, rng: np.random.Generator,
                   suite: str = "", check: str = "identity", anchor: str = "", seed: int = 0,
                   tol: float | None = None) -> CheckReport:
    """Sampled identity of two maps on a cell (within ``tau_homeo`` by default)."""
    tally = _Tally()
    tol = cfg.tau_homeo if tol is None else tol
    X = sample_in_box(domain, cfg.samples, cfg, rng)
    tally.count("points", len(X))
    tally.total = len(X)
    err = np.max(np.abs(apply_map(lhs, X) - apply_map(rhs, X)), axis=1)
    err = np.where(np.isnan(err), np.inf, err)
    for x, e in zip(X[err > tol], err[err > tol]):
        tally.add(x, error=e)
    return tally.report(cfg, suite, check, anchor, seed, {"max_error": float(np.max(err)) if len(err) else 0.0})


# --------------------------------------------------------------------------
# Fibers

def check_fiber_transfer(X: Cell, Y: Cell, fwd: Sequence, bound, x, cfg: OracleConfig, rng: np.random.Generator,
                         suite: str = "", check: str = "fiber", anchor: str = "", seed: int = 0,
                         expect: dict | None = None) -> CheckReport:
    """Fibers of ``X (.) bound∘fwd`` over ``x`` and of ``Y (.) bound`` over ``fwd(x)``.

    ``bound`` is a bound expression or a ``(lo, hi)`` pair for sectors (None
    for infinite ends).  ``expect`` optionally pins the Y-side description:
    ``{"isolated_points": [...], "segments": [...]}``.
    """
    tally = _Tally()
    x = np.asarray(x, dtype=float)
    y = apply_map(fwd, x[None, :])[0]

    def lifted(base, b, compose):
        tr = (lambda e: None if e is None else E.substitute(e, list(fwd))) if compose else (lambda e: e)
        if isinstance(b, tuple):
            return Sector(base, tr(b[0]), tr(b[1]), label=base.label + "s", index=tuple(base.index) + (1,))
        return Section(base, tr(b), label=base.label + "f", index=tuple(base.index) + (1,))

    fx = fiber(lifted(X, bound, True), x, cfg, rng)
    fy = fiber(lifted(Y, bound, False), y, cfg, rng)
    tally.count("fibers", 2)
    if not fx.matches(fy, cfg.tau_fib):
        tally.add(x, issue="fibers differ", x_side=fx.to_dict(), y_side=fy.to_dict())
    if expect is not None:
        want = type(fy)(list(y), [tuple(s) for s in expect.get("segments", [])],
                        list(expect.get("isolated_points", [])))
        if not fy.matches(want, cfg.tau_fib):
            tally.add(y, issue="fiber differs from the expected one", got=fy.to_dict(), expected=want.to_dict())
    return tally.report(cfg, suite, check, anchor, seed,
                        {"x_side": fx.to_dict(), "y_side": fy.to_dict(), "image_basepoint": y.tolist()})


# --------------------------------------------------------------------------
# Retraction

def check_retraction(c: Cell, F: Sequence, in_closure: Callable, on_target: Callable, target_sample: Callable,
                     cfg: OracleConfig, rng: np.random.Generator, suite: str = "", check: str = "retraction",
                     anchor: str = "", seed: int = 0, t_points: int = 21, tol: float | None = None,
                     cross_check: int = 200, probes: Sequence[dict] = ()) -> CheckReport:
    """Deformation retraction of the closure of ``c`` onto a target set.

    ``F`` has one component per coordinate, each of arity n+1 (the last
    variable is t).  ``in_closure`` and ``on_target`` are vectorized
    predicates ``(X, tol) -> bool``; ``target_sample(n, rng)`` draws target
    points.  A subsample of the closure predicate is cross-checked against
    the closure oracle.
    """
    tally = _Tally()
    tol = cfg.tau_homeo if tol is None else tol
    S, Bd = _closure_samples(c, cfg.samples, cfg, rng)
    P = np.vstack([S, Bd])
    tally.count("points", len(S))
    tally.count("boundary_points", len(Bd))

    def Fat(X, t):
        return apply_map(F, np.column_stack([X, np.full(len(X), t)]))

    def report_bad(mask, X, **sub):
        tally.total += len(X)
        for x in X[mask]:
            tally.add(x, **sub)

    report_bad(~in_closure(P, tol), P, issue="sample outside the declared closure")
    F0 = Fat(P, 0.0)
    id_err = np.max(np.abs(F0 - P), axis=1)
    report_bad(~(id_err <= tol), P, issue="F(p, 0) != p")
    F1 = Fat(P, 1.0)
    report_bad(~on_target(F1, tol), P, issue="F(p, 1) not on the target")
    for t in np.linspace(0.0, 1.0, t_points):
        report_bad(~in_closure(Fat(P, t), tol), P, issue="F(p, t) leaves the closure", t=float(t))
    A = target_sample(cfg.samples, rng)
    tally.count("target_points", len(A))
    fix_err = 0.0
    for t in np.linspace(0.0, 1.0, t_points):
        moved = np.max(np.abs(Fat(A, t) - A), axis=1)
        fix_err = max(fix_err, float(np.max(moved)))
        report_bad(~(moved <= tol), A, issue="F moves a target point", t=float(t))
    # the declared closure against the oracle, on images F(p, t)
    idx = rng.choice(len(P), size=min(cross_check, len(P)), replace=False)
    ts = rng.choice(np.linspace(0.0, 1.0, t_points), size=len(idx))
    Q = np.array([Fat(P[i:i + 1], t)[0] for i, t in zip(idx, ts)])
    kind = _dedup_closure([c], Q, cfg, rng)
    tally.total += len(Q)
    tally.unknown += int(np.sum(kind == UNKNOWN))
    for q in Q[kind == NO]:
        tally.add(q, issue="declared closure point rejected by the closure oracle")
    tally.count("oracle_cross_checks", len(Q))
    for probe in probes:
        got = Fat(np.asarray(probe["point"], dtype=float)[None, :], float(probe["t"]))[0]
        tally.total += 1
        if not np.all(np.abs(got - np.asarray(probe["value"], dtype=float)) <= tol):
            tally.add(probe["point"], issue="probe value", t=probe["t"], got=got, expected=probe["value"])
    return tally.report(cfg, suite, check, anchor, seed,
                        {"t_points": t_points, "tol": tol, "max_identity_error": float(np.max(id_err)),
                         "max_fixed_point_error": fix_err})


def piece_predicate(pieces: Sequence[tuple]) -> Callable:
    """Vectorized test for a union of pieces ``(guard, [zero exprs])``, within ``tol``.

    A point passes when, on the box of half-width ``tol`` around it, some
    piece's guard is not certainly false and all its zero expressions have
    enclosures containing 0.
    """
    from ..interval import FALSE, eval_guard_interval, eval_interval_arrays

    def pred(X, tol):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = X - tol, X + tol
        ok = np.zeros(len(X), dtype=bool)
        for guard, zeros in pieces:
            m = eval_guard_interval(guard, lo, hi) != FALSE
            for z in zeros:
                zlo, zhi = eval_interval_arrays(z, lo, hi)
                m &= (zlo <= 0) & (zhi >= 0)
            ok |= m
        return ok & np.all(np.isfinite(X), axis=1)

    return pred


# --------------------------------------------------------------------------
# Membership claims for single points

def check_points(cells: Sequence[Cell], probes: Sequence[dict], cfg: OracleConfig, rng: np.random.Generator,
                 suite: str = "", check: str = "points", anchor: str = "", seed: int = 0) -> CheckReport:
    """Closure and membership verdicts of probe points against expectations.

    A probe is ``{"point": p, "closure": "yes"|"no", "member": "in"|"out"}``;
    the union of ``cells`` is the set under test.
    """
    tally = _Tally()
    rows = []
    for probe in probes:
        p = np.asarray(probe["point"], dtype=float)
        v = closure_contains(list(cells), p, cfg, seed=int(rng.integers(1 << 31)))
        states = [contains(c, p, cfg.width_floor) for c in cells]
        member = IN if IN in states else ("uncertain" if "uncertain" in states else "out")
        rows.append({"point": p.tolist(), "closure": v.kind, "member": member})
        tally.total += 1
        tally.unknown += v.kind == UNKNOWN or member == "uncertain"
        want = probe.get("closure")
        if want is not None and v.kind not in (UNKNOWN, want):
            tally.add(p, closure=v.kind, expected=want)
        want = probe.get("member")
        if want is not None and member not in ("uncertain", want):
            tally.add(p, member=member, expected=want)
    tally.count("probes", len(probes))
    return tally.report(cfg, suite, check, anchor, seed, {"probes": rows})


# --------------------------------------------------------------------------
# The family W

def w_cell(f, label: str = "C3112") -> Cell:
    """The section of ``f`` over {x1 > 0} in R^4."""
    from ..cells import Interval1D
    zero = E.const(0)
    c1 = Interval1D(zero, None, label="C3", index=(3,))
    c2 = Sector(c1, None, None, label="C31", index=(3, 1))
    c3 = Sector(c2, None, None, label="C311", index=(3, 1, 1))
    return Section(c3, f, label=label, index=(3, 1, 1, 2))


def check_w_membership(f, r, cfg: OracleConfig, rng: np.random.Generator, suite: str = "", check: str = "w",
                       anchor: str = "", seed: int = 0, sequences: int = 100, k_max: int = 60,
                       samples: int | None = None) -> CheckReport:
    """Properties of a pair (f, r) on {x1 > 0}.

    (i) the boundary of the section of f is the half-line
    {x1 = x2 = x3 = 0, x4 <= r}: sampled points of {x1 = 0} are closure
    points exactly when they lie on it;
    (ii) f tends to minus infinity along sequences approaching points of
    {x1 = 0} off the x4-axis.
    """
    n = samples or cfg.samples
    tally = _Tally()
    rv = float(E.eval_point(r, []))
    c = w_cell(f)
    box = cfg.box
    # (i) points of {x1 = 0}: a third on the axis, the rest spread out
    m = n // 3
    axis = np.column_stack([np.zeros((m, 3)), rng.uniform(rv - box, rv + box, m)])
    axis = np.vstack([axis, [[0.0, 0.0, 0.0, rv]]])
    u = rng.uniform(-box, box, size=(n - m, 3))
    tiny = rng.random(n - m) < 0.5
    u[tiny] *= 10.0 ** -rng.uniform(1, 3, size=(int(tiny.sum()), 1))
    plane = np.column_stack([np.zeros(n - m), u])
    P = np.vstack([axis, plane])
    kind = _dedup_closure([c], P, cfg, rng)
    on_half = (P[:, 1] == 0) & (P[:, 2] == 0) & (P[:, 3] <= rv)
    sus = (kind == YES) & ~on_half
    if sus.any():
        kind[sus] = _recheck_yes([c], P[sus], cfg, rng)
    tally.count("plane_points", len(P))
    tally.total += len(P)
    unknown = kind == UNKNOWN
    tally.unknown += int(unknown.sum())
    for p, k in zip(P[~unknown & on_half & (kind != YES)], kind[~unknown & on_half & (kind != YES)]):
        tally.add(p, property="i", issue="half-line point not in the closure", closure=k)
    for p in P[~unknown & ~on_half & (kind == YES)]:
        tally.add(p, property="i", issue="closure point off the half-line", closure=YES)
    # (ii) divergence along approach sequences
    a = rng.uniform(-2, 2, size=(sequences, 2))
    a *= np.maximum(np.linalg.norm(a, axis=1, keepdims=True), 0.1) / np.linalg.norm(a, axis=1, keepdims=True)
    direc = np.column_stack([rng.uniform(0.1, 1.0, sequences), rng.normal(size=(sequences, 2))])
    ks = np.arange(1, k_max + 1)
    worst = -np.inf
    for i in range(sequences):
        h = 2.0 ** -ks
        pts = np.column_stack([h * direc[i, 0], a[i, 0] + h * direc[i, 1], a[i, 1] + h * direc[i, 2]])
        vals = E.eval_array(f, pts)
        tail = vals[-10:]
        tail_max = float(np.nanmax(tail)) if np.isfinite(tail).any() else np.inf
        worst = max(worst, tail_max)
        if not (np.all(np.isfinite(tail) | (tail == -np.inf)) and tail_max < -cfg.divergence):
            tally.add(np.append([0.0], a[i]), property="ii", issue="no divergence to -infinity",
                      tail_max=tail_max)
    tally.count("sequences", sequences)
    tally.total += sequences
    return tally.report(cfg, suite, check, anchor, seed, {"r": rv, "worst_tail_max": worst, "k_max": k_max})


# --------------------------------------------------------------------------
# Residuals and local boundary connectedness

def check_residual(terms: Sequence, c: Cell, cfg: OracleConfig, rng: np.random.Generator, samples: int,
                   tol: float, suite: str = "", check: str = "residual", anchor: str = "",
                   seed: int = 0) -> CheckReport:
    """The sum of ``terms`` vanishes on ``c``, relative to the sum of their magnitudes."""
    tally = _Tally()
    X = sample_in_box(c, samples, cfg, rng)
    T = np.column_stack([E.eval_array(t, X) for t in terms])
    rel = np.abs(T.sum(axis=1)) / np.maximum(1.0, np.abs(T).sum(axis=1))
    rel = np.where(np.isnan(rel), np.inf, rel)
    tally.count("points", len(X))
    tally.total = len(X)
    for x, r in zip(X[rel > tol], rel[rel > tol]):
        tally.add(x, residual=r)
    return tally.report(cfg, suite, check, anchor, seed, {"max_relative_residual": float(rel.max()) if len(rel) else 0.0})


def check_lbc_failure(c: Cell, p, components: int, cfg: OracleConfig, rng: np.random.Generator,
                      suite: str = "", check: str = "lbc", anchor: str = "", seed: int = 0) -> CheckReport:
    """``c`` fails to be locally boundary connected at ``p`` with the given component count."""
    from .topology import locally_boundary_connected_at

    tally = _Tally()
    p = np.asarray(p, dtype=float)
    res = locally_boundary_connected_at(c, p, cfg, rng)
    tally.count("radii", len(res.counts))
    tally.total = 1
    persistent = [k for _, k in res.counts if k >= 2]
    if res.verdict != "fails-lbc":
        tally.add(p, verdict=res.verdict, counts=res.counts)
    # sampled graphs only over-split (every edge is a checked path), so the
    # smallest count among the failing radii is the estimate
    elif components and min(persistent) != components:
        tally.add(p, verdict=res.verdict, issue="component count", counts=res.counts, expected=components)
    pairs = [{"eps": e, "a": a, "b": b} for e, a, b in res.witness_pairs[:3]]
    return tally.report(cfg, suite, check, anchor, seed,
                        {"verdict": res.verdict, "counts": [[float(e), int(k)] for e, k in res.counts],
                         "witness_pairs": pairs})
