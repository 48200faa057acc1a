"""Named constructions, loaded from the JSON definitions under ``data/``.

Expression sources may use ``$name`` for a rational parameter and ``@name``
for a previously defined expression (inserted fully parenthesized).  The
data directory can be overridden with ``CADCELLS_DATA``.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from . import expr as E
from .cells import Cad, Cell, Interval1D, Point1D, Region, Section, Sector, ambient, all_cells

SCHEMA_VERSION = 1
ENV_DATA = "CADCELLS_DATA"
FACT_KINDS = {
    "closure_decomposition", "cf", "fiber_set", "wb_violation", "wb_family", "lbc_failure_point",
    "sandwich", "sandwich_counterexample", "homeo_pair", "retraction", "w_membership", "identity",
    "closure_points", "residual",
}


class CatalogError(ValueError):
    pass


@dataclass
class CatalogEntry:
    id: str
    anchor: str
    params: dict
    exprs: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)
    cells: dict = field(default_factory=dict)
    cads: dict = field(default_factory=dict)
    facts: list = field(default_factory=list)
    source: dict = field(default_factory=dict)
    _specs: dict = field(default_factory=dict, repr=False)
    _building: set = field(default_factory=set, repr=False)

    def named(self, name: str):
        """Expression ``name``, built on first use (definitions may come in any order)."""
        if name in self.exprs:
            return self.exprs[name]
        if name not in self._specs:
            raise CatalogError(f"{self.id}: unknown expression @{name}")
        if name in self._building:
            raise CatalogError(f"{self.id}: cyclic definition of @{name}")
        self._building.add(name)
        self.exprs[name] = _build_expr(self, self._specs[name])
        self._building.discard(name)
        return self.exprs[name]

    @property
    def key(self) -> str:
        if not self.params:
            return self.id
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.id}[{inner}]"

    def cell(self, name: str) -> Cell:
        try:
            return self.cells[name]
        except KeyError:
            raise CatalogError(f"{self.id}: unknown cell {name!r}") from None

    def fact(self, fid: str) -> dict:
        for f in self.facts:
            if f["id"] == fid:
                return f
        raise CatalogError(f"{self.id}: unknown fact {fid!r}")

    def expression(self, ref, arity: int | None = None):
        """Resolve ``"@name"``, a composition dict, None, or inline DSL text."""
        if ref is None:
            return None
        if isinstance(ref, dict):
            return self._compose(ref)
        if isinstance(ref, str) and re.fullmatch(r"@\w+", ref):
            return self.named(ref[1:])
        if arity is None:
            raise CatalogError(f"{self.id}: inline expression {ref!r} needs an arity")
        return E.parse(self._template(ref), arity)

    def _compose(self, spec: dict):
        inner = self.maps.get(spec["with"])
        if inner is None:
            raise CatalogError(f"{self.id}: unknown map {spec['with']!r}")
        return E.substitute(self.expression("@" + spec["compose"]), list(inner))

    def _template(self, text: str) -> str:
        def par(m):
            name = m.group(1)
            if name not in self.params:
                raise CatalogError(f"{self.id}: unknown parameter ${name}")
            return f"({Fraction(self.params[name])})"

        def ref(m):
            return f"({E.to_text(self.named(m.group(1)))})"

        return re.sub(r"@(\w+)", ref, re.sub(r"\$(\w+)", par, text))


# --------------------------------------------------------------------------
# Loading

def data_dir() -> Path:
    env = os.environ.get(ENV_DATA)
    if env:
        return Path(env)
    return Path(str(resources.files("cadcells") / "data"))


def entry_ids() -> list[str]:
    return sorted(p.stem for p in data_dir().glob("*.json"))


def read_source(entry_id: str) -> dict:
    path = data_dir() / f"{entry_id}.json"
    if not path.exists():
        raise CatalogError(f"no catalog entry {entry_id!r} in {data_dir()}")
    doc = json.loads(path.read_text())
    if doc.get("schema") != SCHEMA_VERSION:
        raise CatalogError(f"{path.name}: schema {doc.get('schema')!r}, expected {SCHEMA_VERSION}")
    if "extends" in doc:
        base = read_source(doc["extends"])
        merged = dict(base)
        for key in ("exprs", "maps", "cells", "cads"):
            merged[key] = {**base.get(key, {}), **doc.get(key, {})}
        merged["params"] = doc.get("params", base.get("params", {}))
        drop = doc.get("drop_facts", [])
        inherited = [dict(f) for f in base.get("facts", []) if drop != "all" and f["id"] not in drop]
        if "inherit_suites" in doc:
            for f in inherited:
                if "suites" in f:
                    f["suites"] = list(doc["inherit_suites"])
        merged["facts"] = inherited + doc.get("facts", [])
        for key in ("id", "anchor"):
            merged[key] = doc[key]
        return merged
    return doc


def load_entry(entry_id: str, **params) -> CatalogEntry:
    doc = read_source(entry_id)
    defaults = {k: str(Fraction(v)) for k, v in doc.get("params", {}).items()}
    for k in params:
        if k not in defaults:
            raise CatalogError(f"{entry_id}: unknown parameter {k!r}")
    merged = {**defaults, **{k: str(Fraction(v)) for k, v in params.items()}}
    entry = CatalogEntry(doc["id"], doc.get("anchor", ""), merged, source=doc)
    entry._specs = dict(doc.get("exprs", {}))
    # maps first: compositions refer to them
    for name, spec in doc.get("maps", {}).items():
        ar = spec["arity"]
        entry.maps[name] = tuple(entry.expression(c, ar) for c in spec["components"])
    for name in entry._specs:
        entry.named(name)
    for name, spec in doc.get("cads", {}).items():
        entry.cads[name] = _build_cad(entry, spec)
        for c in all_cells(entry.cads[name]):
            entry.cells.setdefault(c.label, c)
    for name, spec in doc.get("cells", {}).items():
        entry.cells[name] = _build_cell(entry, name, spec)
    entry.facts = [dict(f) for f in doc.get("facts", [])]
    validate(entry)
    return entry


def _build_expr(entry: CatalogEntry, spec: dict):
    if "compose" in spec:
        return entry._compose(spec)
    return E.parse(entry._template(spec["text"]), spec["arity"])


def _bound(entry: CatalogEntry, ref, arity: int):
    return entry.expression(ref, arity)


def _build_cell(entry: CatalogEntry, name: str, spec: dict) -> Cell:
    kind = spec["kind"]
    if kind == "region":
        d = spec["dim"]
        guard = E.parse_guard(entry._template(spec["guard"]), d)
        bbox = tuple((float(Fraction(a)), float(Fraction(b))) for a, b in spec["bbox"])
        return Region(d, guard, bbox, label=name, index=())
    if kind == "point":
        return Point1D(_bound(entry, spec["value"], 0), label=name, index=())
    if kind == "interval":
        return Interval1D(_bound(entry, spec.get("lo"), 0), _bound(entry, spec.get("hi"), 0), label=name, index=())
    base = entry.cell(spec["base"])
    k = ambient(base)
    if kind == "section":
        return Section(base, _bound(entry, spec["bound"], k), label=name, index=())
    if kind == "sector":
        return Sector(base, _bound(entry, spec.get("lo"), k), _bound(entry, spec.get("hi"), k),
                      label=name, index=())
    raise CatalogError(f"{entry.id}: unknown cell kind {kind!r}")


def _build_cad(entry: CatalogEntry, spec: dict) -> Cad:
    level1 = [_bound(entry, t, 0) for t in spec["level1"]]
    stacks = {}
    for key, bounds in spec.get("stacks", {}).items():
        idx = tuple(int(x) for x in key.split(","))
        stacks[idx] = [_bound(entry, b, len(idx)) for b in bounds]
    return Cad.build(spec["n"], level1, stacks, check=spec.get("check_order", False))


# --------------------------------------------------------------------------
# Validation

_CELL_KEYS = ("cell", "cells", "parts", "x", "y", "base", "cover", "family")


def validate(entry: CatalogEntry) -> None:
    """Every fact must reference entities of its own entry."""
    seen = set()
    for f in entry.facts:
        if f.get("kind") not in FACT_KINDS:
            raise CatalogError(f"{entry.id}: fact {f.get('id')!r} has unknown kind {f.get('kind')!r}")
        if f["id"] in seen:
            raise CatalogError(f"{entry.id}: duplicate fact id {f['id']!r}")
        seen.add(f["id"])
        for key in _CELL_KEYS:
            val = f.get(key)
            if val is None:
                continue
            for name in _flatten(val):
                entry.cell(name)
        for key in ("fwd", "inv", "map", "F"):
            if key in f and f[key] not in entry.maps:
                raise CatalogError(f"{entry.id}: fact {f['id']!r} references unknown map {f[key]!r}")
        if f["kind"] == "cf":
            for ref in f["claims"]:
                entry.fact(ref)
        if f["kind"] == "wb_family":
            for claim in f["claims"]:
                entry.cell(claim["cell"])
                for name in claim["family"]:
                    entry.cell(name)


def _flatten(val):
    if isinstance(val, str):
        yield val
    elif isinstance(val, (list, tuple)):
        for v in val:
            yield from _flatten(v)


# --------------------------------------------------------------------------
# Named constructors

def entry_c3() -> CatalogEntry:
    return load_entry("c3")


def entry_w_family(s=0) -> CatalogEntry:
    return load_entry("w_family", s=s)


def entry_lazard() -> CatalogEntry:
    return load_entry("lazard")


def entry_cornet_slitdisk() -> CatalogEntry:
    return load_entry("cornet_slitdisk")


def entry_trousers() -> CatalogEntry:
    return load_entry("trousers")


def entry_ring() -> CatalogEntry:
    return load_entry("ring")


def entry_sector_regular_bounds() -> CatalogEntry:
    return load_entry("sector_regular_bounds")


def entry_non_cf_variant() -> CatalogEntry:
    return load_entry("non_cf_variant")


ENTRIES = {
    "c3": entry_c3,
    "w_family": entry_w_family,
    "lazard": entry_lazard,
    "cornet_slitdisk": entry_cornet_slitdisk,
    "trousers": entry_trousers,
    "ring": entry_ring,
    "sector_regular_bounds": entry_sector_regular_bounds,
    "non_cf_variant": entry_non_cf_variant,
}
