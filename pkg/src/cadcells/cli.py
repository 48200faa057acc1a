"""Command line: ``cadcells verify <suite>`` and ``cadcells mesh <entry> <object>``.

Exit codes: 0 all checks pass, 1 some check fails, 2 some check is
inconclusive (and none fails), 3 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from pathlib import Path

from . import mesh as M
from .catalog import CatalogError
from .suites import ALL, SUITES, SuiteConfig, SuiteError, dumps, exit_code, report_document, run_suite

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_eps_min(text: str) -> int:
    """``2^-K``, ``K`` or a float 2^-K; returns K."""
    text = str(text).strip().replace(" ", "")
    m = re.fullmatch(r"2\^\(?-(\d+)\)?", text)
    if m:
        return int(m.group(1))
    if re.fullmatch(r"\d+", text):
        return int(text)
    try:
        v = float(text)
    except ValueError:
        raise UsageError(f"cannot read radius floor {text!r}; use 2^-K") from None
    k = -math.log2(v) if v > 0 else math.nan
    if not (math.isfinite(k) and abs(k - round(k)) < 1e-9):
        raise UsageError(f"radius floor {text!r} is not a power 2^-K")
    return int(round(k))


def _parser() -> _Parser:
    p = _Parser(prog="cadcells", description="Check closure and boundary facts of CAD cells.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", help=f"one of {', '.join(SUITES + (ALL,))}")
    v.add_argument("--seed", type=int)
    v.add_argument("--samples", type=int, help="samples per side of each check")
    v.add_argument("--shift", nargs="+", help="shift parameters s of the W family")
    v.add_argument("--report", help="write the JSON report here")
    v.add_argument("--eps-min", help="radius floor 2^-K")
    v.add_argument("--config", help="JSON file with any of these options; flags win")
    v.add_argument("--workers", type=int)
    v.add_argument("--timing", action="store_true", default=None, help="record wall-clock milliseconds")
    v.add_argument("--set", action="append", default=[], metavar="NAME=VALUE",
                   help="override an oracle tolerance, e.g. tau_fib=1e-7")
    v.add_argument("--quiet", action="store_true")
    m = sub.add_parser("mesh", help="export a PLY mesh of a catalog object")
    m.add_argument("entry")
    m.add_argument("object")
    m.add_argument("--res", type=int, default=64)
    m.add_argument("--out")
    return p


def _config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise UsageError(f"cannot read config {path}: {err}") from None
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def _overrides(items) -> dict:
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects NAME=VALUE, got {item!r}")
        try:
            out[name] = json.loads(value)
        except json.JSONDecodeError:
            raise UsageError(f"--set {name}: value {value!r} is not a number") from None
    return out


def suite_config(args) -> tuple[SuiteConfig, str | None, bool]:
    file = _config_file(args.config)
    known = {"seed", "samples", "shift", "shifts", "report", "eps_min", "workers", "timing", "overrides", "quiet"}
    bad = sorted(set(file) - known)
    if bad:
        raise UsageError(f"unknown config key(s): {', '.join(bad)}")

    def pick(flag, key, default):
        return flag if flag is not None else file.get(key, default)

    shifts = args.shift if args.shift is not None else file.get("shift", file.get("shifts"))
    overrides = {**file.get("overrides", {}), **_overrides(args.set)}
    kw = {"suite": args.suite, "seed": int(pick(args.seed, "seed", 0)),
          "samples": int(pick(args.samples, "samples", 10_000)),
          "workers": int(pick(args.workers, "workers", 1)),
          "timing": bool(pick(args.timing, "timing", False)), "overrides": overrides}
    eps = pick(args.eps_min, "eps_min", None)
    if eps is not None:
        kw["eps_levels"] = parse_eps_min(eps)
    if shifts is not None:
        kw["shifts"] = tuple(str(s) for s in shifts)
    try:
        cfg = SuiteConfig(**kw)
        cfg.oracle_config()
    except (SuiteError, ValueError, TypeError) as err:
        raise UsageError(str(err)) from None
    return cfg, pick(args.report, "report", None), bool(args.quiet or file.get("quiet", False))


def _verify(args) -> int:
    cfg, report, quiet = suite_config(args)
    if report:
        path = Path(report)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.touch()
        except OSError as err:
            raise UsageError(f"cannot write report {report}: {err}") from None
    try:
        reports = run_suite(cfg)
    except (CatalogError, SuiteError) as err:
        raise UsageError(str(err)) from None
    doc = report_document(cfg, reports)
    if report:
        Path(report).write_text(dumps(doc))
    if not quiet:
        for r in reports:
            expected = r.details.get("expected", "pass")
            note = "" if r.verdict == expected else f"  (expected {expected})"
            print(f"{r.verdict.upper():12s} {r.suite:22s} {r.check}  violations={r.violation_count} "
                  f"inconclusive={r.inconclusive_fraction:.4f}{note}")
        s = doc["summary"]
        print(f"{s['checks']} checks: {s['pass']} pass, {s['fail']} fail, {s['inconclusive']} inconclusive; "
              f"{s['as_expected']} as expected")
    return exit_code(reports)


def _mesh(args) -> int:
    try:
        paths = M.export_mesh(args.entry, args.object, args.res, args.out)
    except (M.MeshError, CatalogError) as err:
        raise UsageError(str(err)) from None
    except OSError as err:
        raise UsageError(f"cannot write mesh: {err}") from None
    for p in paths:
        print(p)
    return EXIT_PASS


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        return _verify(args) if args.command == "verify" else _mesh(args)
    except UsageError as err:
        print(f"cadcells: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
