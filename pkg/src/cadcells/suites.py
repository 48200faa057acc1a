"""Verification suites: catalog facts mapped onto checkers."""

from __future__ import annotations

import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import expr as E
from .catalog import CatalogEntry, load_entry
from .cells import ambient
from .oracles import checks as K
from .oracles.config import OracleConfig

SUITES = ("thm-cf-not-wb", "lemma-sandwich", "remark-lazard", "prop-cornet", "prop-fibre",
          "remark-sandwich-fail", "prop-ring", "prop-sector", "negative-controls")
ALL = "all"
DEFAULT_SHIFTS = ("-1", "0", "1/2", "2")
# entries holding facts for each suite; the shift list applies to w_family
SUITE_ENTRIES = {
    "thm-cf-not-wb": ("c3", "w_family"),
    "lemma-sandwich": ("trousers", "ring"),
    "remark-lazard": ("lazard",),
    "prop-cornet": ("cornet_slitdisk",),
    "prop-fibre": ("trousers",),
    "remark-sandwich-fail": ("trousers",),
    "prop-ring": ("ring",),
    "prop-sector": ("sector_regular_bounds",),
    "negative-controls": ("non_cf_variant",),
}


class SuiteError(ValueError):
    pass


@dataclass(frozen=True)
class SuiteConfig:
    suite: str
    seed: int = 0
    samples: int = 10_000
    eps_levels: int = 20
    shifts: tuple = DEFAULT_SHIFTS
    overrides: dict = field(default_factory=dict)
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.suite not in SUITES and self.suite != ALL:
            raise SuiteError(f"unknown suite {self.suite!r}; expected one of {', '.join(SUITES + (ALL,))}")
        if self.samples < 1:
            raise SuiteError("samples must be positive")
        if not 1 <= self.eps_levels <= 30:
            raise SuiteError("the radius floor must lie between 2^-1 and 2^-30")

    def oracle_config(self) -> OracleConfig:
        known = OracleConfig.__dataclass_fields__
        bad = sorted(set(self.overrides) - set(known))
        if bad:
            raise SuiteError(f"unknown tolerance override(s): {', '.join(bad)}")
        return OracleConfig(**{**self.overrides, "samples": self.samples, "eps_levels": self.eps_levels})


@dataclass(frozen=True)
class Task:
    suite: str
    entry: str
    params: tuple
    fact: str

    @property
    def check_id(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in self.params)
        key = f"{self.entry}[{inner}]" if inner else self.entry
        return f"{key}/{self.fact}"


@lru_cache(maxsize=32)
def _entry(entry_id: str, params: tuple) -> CatalogEntry:
    return load_entry(entry_id, **dict(params))


def plan(cfg: SuiteConfig) -> list[Task]:
    """The checks of a suite, in report order (suite, then check id)."""
    suites = SUITES if cfg.suite == ALL else (cfg.suite,)
    tasks = []
    for suite in suites:
        for entry_id in SUITE_ENTRIES[suite]:
            variants = [(("s", str(Fraction(s))),) for s in cfg.shifts] if entry_id == "w_family" else [()]
            for params in variants:
                entry = _entry(entry_id, params)
                tasks += [Task(suite, entry_id, params, f["id"]) for f in entry.facts
                          if suite in f.get("suites", ())]
    return sorted(tasks, key=lambda t: (t.suite, t.check_id))


def run_suite(cfg: SuiteConfig) -> list[K.CheckReport]:
    tasks = plan(cfg)
    ocfg = cfg.oracle_config()
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            reports = list(pool.map(_run_task, tasks, [ocfg] * len(tasks), [cfg.seed] * len(tasks)))
    else:
        reports = [_run_task(t, ocfg, cfg.seed) for t in tasks]
    if not cfg.timing:
        for r in reports:
            r.millis = None
    return reports


def exit_code(reports) -> int:
    verdicts = {r.verdict for r in reports}
    if K.FAIL in verdicts:
        return 1
    if K.INCONCLUSIVE in verdicts:
        return 2
    return 0


def report_document(cfg: SuiteConfig, reports) -> dict:
    counts = {v: sum(r.verdict == v for r in reports) for v in (K.PASS, K.FAIL, K.INCONCLUSIVE)}
    as_expected = sum(r.verdict == r.details.get("expected", K.PASS) for r in reports)
    return {"suite": cfg.suite, "seed": cfg.seed, "samples": cfg.samples, "eps_min": f"2^-{cfg.eps_levels}",
            "shifts": list(cfg.shifts), "config": cfg.oracle_config().to_dict(),
            "summary": {**counts, "as_expected": as_expected, "checks": len(reports)},
            "reports": [r.to_dict() for r in reports]}


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=True) + "\n"


# --------------------------------------------------------------------------
# Fact dispatch

def _rng(seed: int, check_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(check_id.encode())])


def _num(v) -> float:
    if isinstance(v, str):
        try:
            return float(Fraction(v))
        except ValueError:
            return float(E.eval_point(E.parse(v, 0), []))
    return float(v)


def _point(vals) -> np.ndarray:
    return np.array([_num(v) for v in vals], dtype=float)


def _run_task(task: Task, cfg: OracleConfig, seed: int) -> K.CheckReport:
    entry = _entry(task.entry, task.params)
    fact = entry.fact(task.fact)
    rng = _rng(seed, task.check_id)
    kw = dict(suite=task.suite, check=task.check_id, anchor=fact.get("anchor", ""), seed=seed)
    report = _DISPATCH[fact["kind"]](entry, fact, cfg, rng, kw)
    report.details = {"kind": fact["kind"], "expected": expected_verdict(fact), **report.details}
    return report


def expected_verdict(fact: dict) -> str:
    want = fact.get("expect", K.PASS)
    return want if isinstance(want, str) else K.PASS


def _cad_cells(entry, fact):
    return list(entry.cads[fact.get("cad", "main")].cells)


def _cells(entry, names):
    return [entry.cell(n) for n in names]


def _do_closure(entry, fact, cfg, rng, kw):
    return K.check_closure_decomposition(_cells(entry, fact["cells"]), _cells(entry, fact["parts"]),
                                         _cad_cells(entry, fact), cfg, rng, **kw)


def _do_cf(entry, fact, cfg, rng, kw):
    claims = []
    for ref in fact["claims"]:
        f = entry.fact(ref)
        claims.append((_cells(entry, f["cells"]), _cells(entry, f["parts"])))
    return K.check_cf(_cad_cells(entry, fact), claims, cfg, rng, **kw)


def _do_wb_violation(entry, fact, cfg, rng, kw):
    claims = [{"cell": entry.cell(fact["cell"]), "violation": _cells(entry, fact["cover"])}]
    return K.check_wb(_cad_cells(entry, fact), claims, cfg, rng, samples=fact.get("samples"), **kw)


def _do_wb_family(entry, fact, cfg, rng, kw):
    claims = [{"cell": entry.cell(c["cell"]), "family": _cells(entry, c["family"])} for c in fact["claims"]]
    n = min(fact["samples"], cfg.samples) if "samples" in fact else None
    return K.check_wb(_cad_cells(entry, fact), claims, cfg, rng, samples=n, **kw)


def _do_w(entry, fact, cfg, rng, kw):
    return K.check_w_membership(entry.expression(fact["f"], 3), entry.expression(fact["r"], 0), cfg, rng, **kw)


def _do_residual(entry, fact, cfg, rng, kw):
    c = entry.cell(fact["cell"])
    terms = [entry.expression(t, fact.get("arity", ambient(c))) for t in fact["terms"]]
    return K.check_residual(terms, c, cfg, rng, min(fact.get("samples", cfg.samples), cfg.samples),
                            fact.get("tol", 1e-9), **kw)


def _bound_of(entry, spec, arity):
    if isinstance(spec, dict) and ("lo" in spec or "hi" in spec):
        return (entry.expression(spec.get("lo"), arity), entry.expression(spec.get("hi"), arity))
    return entry.expression(spec, arity)


def _do_fiber(entry, fact, cfg, rng, kw):
    X, Y = entry.cell(fact["x"]), entry.cell(fact["y"])
    fwd = entry.maps[fact["map"]]
    bound = _bound_of(entry, fact["bound"], ambient(Y))
    expect = None
    if "expect" in fact and isinstance(fact["expect"], dict):
        expect = {"segments": [[_num(a), _num(b)] for a, b in fact["expect"].get("segments", [])],
                  "isolated_points": [_num(t) for t in fact["expect"].get("isolated_points", [])]}
    return K.check_fiber_transfer(X, Y, fwd, bound, _point(fact["point"]), cfg, rng, expect=expect, **kw)


def _do_sandwich(entry, fact, cfg, rng, kw):
    base = entry.cell(fact["base"])
    k = ambient(base)
    f1, f2, f3 = (entry.expression(fact.get(key), k) for key in ("f1", "f2", "f3"))
    probes = [{**p, "point": _point(p["point"])} for p in fact.get("probes", [])]
    return K.check_sandwich(base, f1, f2, f3, probes, cfg, rng, **kw)


def _do_homeo(entry, fact, cfg, rng, kw):
    probes = [{**p, "point": _point(p["point"]), "value": _point(p["value"])} for p in fact.get("probes", [])]
    return K.check_homeo_pair(entry.maps[fact["fwd"]], entry.maps[fact["inv"]], entry.cell(fact["x"]),
                              entry.cell(fact["y"]), cfg, rng, probes=probes, **kw)


def _do_identity(entry, fact, cfg, rng, kw):
    c = entry.cell(fact["cell"])
    lhs = [entry.expression(e, ambient(c)) for e in fact["lhs"]]
    rhs = [entry.expression(e, ambient(c)) for e in fact["rhs"]]
    return K.check_identity(lhs, rhs, c, cfg, rng, tol=fact.get("tol"), **kw)


def _do_lbc(entry, fact, cfg, rng, kw):
    return K.check_lbc_failure(entry.cell(fact["cell"]), _point(fact["point"]), fact.get("components", 2),
                               cfg, rng, **kw)


def _pieces(entry, specs, arity):
    return [(E.parse_guard(entry._template(p["where"]), arity), [entry.expression(z, arity) for z in p["zero"]])
            for p in specs]


def _tan_half(n, rng):
    return np.tan(rng.uniform(-math.pi / 2, math.pi / 2, n))[:, None]


def _do_retraction(entry, fact, cfg, rng, kw):
    c = entry.cell(fact["cell"])
    n = ambient(c)
    in_closure = K.piece_predicate(_pieces(entry, fact["closure"], n))
    on_target = K.piece_predicate(_pieces(entry, fact["target"], n))
    param = entry.maps[fact["target_map"]]

    def target_sample(m, g):
        return K.apply_map(param, _tan_half(m, g))

    probes = [{"point": _point(p["point"]), "t": _num(p["t"]), "value": _point(p["value"])}
              for p in fact.get("probes", [])]
    return K.check_retraction(c, entry.maps[fact["F"]], in_closure, on_target, target_sample, cfg, rng,
                              t_points=fact.get("t_points", 21), probes=probes, **kw)


def _do_points(entry, fact, cfg, rng, kw):
    probes = [{**p, "point": _point(p["point"])} for p in fact.get("probes", [])]
    if "map" in fact:
        P = K.apply_map(entry.maps[fact["map"]], _tan_half(fact.get("count", 100), rng))
        probes += [{"point": p, "closure": fact.get("closure", "yes")} for p in P]
    return K.check_points(_cells(entry, fact["cells"]), probes, cfg, rng, **kw)


_DISPATCH = {
    "closure_decomposition": _do_closure,
    "cf": _do_cf,
    "wb_violation": _do_wb_violation,
    "wb_family": _do_wb_family,
    "w_membership": _do_w,
    "residual": _do_residual,
    "fiber_set": _do_fiber,
    "sandwich": _do_sandwich,
    "sandwich_counterexample": _do_sandwich,
    "homeo_pair": _do_homeo,
    "identity": _do_identity,
    "lbc_failure_point": _do_lbc,
    "retraction": _do_retraction,
    "closure_points": _do_points,
}
