"""Acceptance criteria 1-10, run at full size (10^4 samples per side, seed 7).

Each test records a one-line verdict in ``conftest.ACCEPTANCE``; the lines are
printed at the end of the session.  Expect several minutes of runtime.
"""

import json
import subprocess
import sys
import time

import pytest

from conftest import ACCEPTANCE
from cadcells.suites import DEFAULT_SHIFTS, SuiteConfig, run_suite

SEED = 7
N = 10_000


def _verify(*args):
    return subprocess.run([sys.executable, "-m", "cadcells", "verify", *args], capture_output=True, text=True)


@pytest.fixture(scope="module")
def full(tmp_path_factory):
    """Two independent runs of ``verify all --seed 7``."""
    d = tmp_path_factory.mktemp("acceptance")
    paths = [d / "first.json", d / "second.json"]
    codes = [_verify("all", "--seed", str(SEED), "--report", str(p), "--quiet").returncode for p in paths]
    doc = json.loads(paths[0].read_text())
    return {"doc": doc, "bytes": [p.read_bytes() for p in paths], "codes": codes}


def _reports(full, suite, prefix=""):
    return [r for r in full["doc"]["reports"] if r["suite"] == suite and r["check"].startswith(prefix)]


def _one(full, suite, check):
    found = [r for r in full["doc"]["reports"] if r["suite"] == suite and r["check"] == check]
    assert len(found) == 1, f"{suite} {check}: {len(found)} reports"
    return found[0]


def _record(k, problems, detail):
    ok = not problems
    ACCEPTANCE[k] = (ok, detail if ok else "; ".join(problems[:4]))
    assert ok, problems


def _near(a, b, tol):
    return len(a) == len(b) and all(abs(x - y) <= tol for x, y in zip(a, b))


def test_criterion_01_closure_finite_not_well_bordered(full):
    problems, times = [], []
    for s in DEFAULT_SHIFTS:
        key = f"w_family[s={s}]/"
        # the eleven closure decompositions are the claims of the cf check
        claims = _one(full, "thm-cf-not-wb", key + "cf")["details"]["claims"]
        if len(claims) != 11:
            problems.append(f"s={s}: {len(claims)} closure claims")
        for c in claims:
            if c["violations"] or c["inconclusive_fraction"] >= 0.02:
                problems.append(f"s={s} {c['cells']}: v={c['violations']} inc={c['inconclusive_fraction']}")
            if min(c["part_points"], c["other_points"]) < N:
                problems.append(f"s={s} {c['cells']}: {c['part_points']}/{c['other_points']} samples")
        for fact in ("cf", "wb-violation", "wb-others"):
            r = _one(full, "thm-cf-not-wb", key + fact)
            if r["verdict"] != "pass":
                problems.append(f"{r['check']}: {r['verdict']}")
        dims = _one(full, "thm-cf-not-wb", key + "wb-violation")["details"]["claims"][0]["max_cover_dim"]
        if dims > 1:
            problems.append(f"s={s}: boundary dimension {dims}")
        t0 = time.perf_counter()
        reps = run_suite(SuiteConfig("thm-cf-not-wb", seed=SEED, shifts=(s,)))
        times.append(time.perf_counter() - t0)
        if any(r.verdict != "pass" for r in reps):
            problems.append(f"s={s}: timed rerun not clean")
        if times[-1] >= 120:
            problems.append(f"s={s}: {times[-1]:.0f} s")
    _record(1, problems, "11 closure facts x 4 shifts clean, boundary dim <= 1, "
                         f"max {max(times):.0f} s per shift")


def test_criterion_02_doubleton_fiber(full):
    r = _one(full, "prop-fibre", "trousers/fiber-doubleton")
    x = r["details"]["x_side"]
    problems = []
    if r["verdict"] != "pass":
        problems.append(f"verdict {r['verdict']}")
    if x["segments"] or not _near(sorted(x["isolated_points"]), [-0.5, 0.0], 1e-6):
        problems.append(f"fiber {x}")
    _record(2, problems, f"isolated points {[round(t, 9) for t in x['isolated_points']]}")


def test_criterion_03_homeomorphism_pair(full):
    r = _one(full, "prop-cornet", "cornet_slitdisk/homeo")
    err = r["details"]["max_round_trip_error"]
    s = r["samples"]
    problems = []
    if r["verdict"] != "pass":
        problems.append(f"verdict {r['verdict']}: {r['violations'][:2]}")
    if max(err.values()) > 1e-9:
        problems.append(f"round trip {err}")
    for side in "XY":
        if s[f"{side}_points"] + s[f"{side}_boundary_points"] < N:
            problems.append(f"{side}: too few samples")
    fwd = [p for p in r["details"]["probes"] if p["map"] == "fwd" and p["point"] == [0.0, 0.0, 0.5]]
    if not fwd or fwd[0]["value"] != [-0.5, 0.0]:
        problems.append(f"phi(0,0,1/2) = {fwd}")
    _record(3, problems, f"round trip {max(err.values()):.1e}, phi(0,0,1/2) = (-1/2, 0) exactly")


def test_criterion_04_sandwich_counterexample(full):
    problems = []
    flat = _one(full, "remark-sandwich-fail", "trousers/sandwich-slitdisk")["details"]["probes"][0]
    cone = _one(full, "remark-sandwich-fail", "trousers/sandwich-cornet")["details"]["probes"][0]
    if (flat["A"], flat["C"], flat["B"]) != ("yes", "yes", "no"):
        problems.append(f"slit disk side {flat}")
    if flat["B_radius"] is None or flat["B_radius"] < 0.15:
        problems.append(f"radius {flat['B_radius']}")
    if (cone["A"], cone["B"], cone["C"]) != (flat["A"], flat["B"], flat["C"]):
        problems.append(f"cornet side {cone}")
    _record(4, problems, f"yes/yes/no on both sides, separation radius {flat['B_radius']:.4f}")


def test_criterion_05_unconditional_inclusion(full):
    problems, seen = [], 0
    for r in full["doc"]["reports"]:
        if r["details"]["kind"] not in ("sandwich", "sandwich_counterexample"):
            continue
        seen += 1
        if r["samples"].get("section_points", 0) < N:
            problems.append(f"{r['check']}: {r['samples']}")
        if r["violation_count"]:
            problems.append(f"{r['check']}: {r['violation_count']} violations")
    if seen < 4:
        problems.append(f"only {seen} sandwich checks")
    _record(5, problems, f"{seen} sandwich checks, 0 violations over 10^4 section points each")


def test_criterion_06_retraction(full):
    r = _one(full, "prop-ring", "ring/retraction")
    d, s = r["details"], r["samples"]
    problems = []
    if r["verdict"] != "pass" or r["violation_count"]:
        problems.append(f"{r['verdict']}: {r['violations'][:2]}")
    if d["t_points"] != 21 or s["points"] + s["boundary_points"] < N or s["target_points"] < N:
        problems.append(f"grid {d['t_points']} samples {s}")
    if d["max_identity_error"] > 1e-9 or d["max_fixed_point_error"] > 1e-9 or d["tol"] > 1e-9:
        problems.append(f"errors {d}")
    _record(6, problems, f"21-point grid x 10^4 samples, 0 violations, F(.,0) error {d['max_identity_error']:.1e}")


def test_criterion_07_sector_proxies(full):
    problems = []
    ident = _one(full, "prop-sector", "sector_regular_bounds/m-third-coordinate")
    if ident["verdict"] != "pass" or ident["details"]["max_error"] > 1e-9 or ident["samples"]["points"] < N:
        problems.append(f"identity {ident['verdict']} {ident['details']}")
    red = _one(full, "prop-sector", "sector_regular_bounds/red-region")
    want = {(-0.5, 0.0, 0.125), (-0.5, 0.0, -0.125), (-0.5, 0.0, 0.0)}
    got = {tuple(p["point"]) for p in red["details"]["probes"]
           if p["closure"] == "yes" and p["member"] == "out"}
    if red["verdict"] != "pass" or not want <= got:
        problems.append(f"probes {red['details']['probes']}")
    _record(7, problems, f"identity error {ident['details']['max_error']:.1e}, three probes closure-yes/out")


def test_criterion_08_w_membership(full):
    problems, worst = [], []
    members = [_one(full, "thm-cf-not-wb", f"w_family[s={s}]/w-membership") for s in DEFAULT_SHIFTS]
    members.append(_one(full, "remark-lazard", "lazard/w-membership"))
    for r in members:
        worst.append(r["details"]["worst_tail_max"])
        if r["verdict"] != "pass" or r["samples"]["sequences"] < 100 or worst[-1] >= -1e6:
            problems.append(f"{r['check']}: {r['verdict']} tail {worst[-1]}")
    ctl = _one(full, "negative-controls", "non_cf_variant/w-constant")
    if ctl["verdict"] != "fail" or not any(v["sub_verdicts"]["property"] == "ii" for v in ctl["violations"]):
        problems.append(f"control {ctl['verdict']}")
    _record(8, problems, f"5 pairs pass, worst tail {max(worst):.1e}; constant control fails (ii)")


def test_criterion_09_negative_control(full):
    res = _verify("negative-controls", "--seed", str(SEED), "--quiet")
    r = _one(full, "negative-controls", "non_cf_variant/cf")
    # the variant is built with s = 0, so the half-line is {0}^3 x (-inf, 0]
    on_line = [v["point"] for v in r["violations"]
               if v["point"][:3] == [0.0, 0.0, 0.0] and v["point"][3] <= 0.0]
    problems = []
    if res.returncode != 1:
        problems.append(f"exit code {res.returncode}")
    if r["verdict"] != "fail" or not on_line:
        problems.append(f"cf {r['verdict']}, no witness on the half-line")
    _record(9, problems, f"check_cf fails, witness {on_line[0] if on_line else None}, exit code {res.returncode}")


def test_criterion_10_determinism(full):
    a, b = full["bytes"]
    problems = [] if a == b else ["reports differ"]
    if full["codes"][0] != full["codes"][1]:
        problems.append(f"exit codes {full['codes']}")
    _record(10, problems, f"two runs byte-identical ({len(a)} bytes)")
