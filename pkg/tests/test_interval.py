import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cadcells import expr as E
from cadcells.interval import FALSE, TRUE, UNKNOWN, Interval, eval_guard_interval, eval_interval, \
    eval_interval_arrays, point_box


def test_dependency_problem_is_sound():
    iv = eval_interval(E.parse("x1^2 - x1", 1), [Interval(0, 1)])
    assert iv.lo <= -0.25 and iv.hi >= 0


def test_exact_zero_stays_exact():
    assert eval_interval(E.parse("sign(x1)", 1), [Interval(0, 0)]) == Interval(0.0, 0.0)
    assert eval_interval(E.parse("x1*x2", 2), point_box([0.0, 3.0])) == Interval(0.0, 0.0)


def test_sqrt_clips_domain():
    iv = eval_interval(E.parse("sqrt(x1)", 1), [Interval(-1, 4)])
    assert iv.lo == 0.0 and 2.0 <= iv.hi < 2.0 + 1e-12


def test_outward_rounding_encloses_one_third():
    iv = eval_interval(E.parse("1/3", 0), [])
    assert iv.lo < 1 / 3 + 1e-300 and iv.hi >= 1 / 3 and iv.lo <= iv.hi


def test_guards_three_valued():
    g = E.parse_guard("x1^2+x2^2<1 && x2>0", 2)
    lo = np.array([[0.1, 0.1], [2.0, 2.0], [-0.5, -0.5]])
    hi = np.array([[0.2, 0.2], [3.0, 3.0], [0.5, 0.5]])
    assert list(eval_guard_interval(g, lo, hi)) == [TRUE, FALSE, UNKNOWN]


def test_piecewise_unreachable_branch_is_ignored():
    e = E.parse("piecewise{ x1 < 0 : 100 ; _ : x1 }", 1)
    lo, hi = eval_interval_arrays(e, np.array([[1.0]]), np.array([[2.0]]))
    assert lo[0] <= 1.0 and hi[0] >= 2.0 and hi[0] < 100


_texts = st.sampled_from([
    "x1^2 - 2*x1*x2 + x2^3",
    "sqrt(x1^2 + x2^2) - x1",
    "sign(x2)*sqrt((sqrt(x1^2+x2^2)-x1)/2) + 2*root4(x1^2+x2^2)",
    "piecewise{ x1<0 && x2<0 : x1 ; _ : 0 }",
    "min(x1, x2) * max(x1, -x2) + abs(x1 - x2)",
    "(x1^2+x2^2)/(2*x1 + 5)",
])


@settings(max_examples=200, deadline=None)
@given(_texts, st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 0.5), st.floats(0, 0.5), st.integers(0, 2 ** 31))
def test_enclosure_contains_point_values(text, a, b, wa, wb, seed):
    e = E.parse(text, 2)
    lo = np.array([[a, b]])
    hi = lo + [[wa, wb]]
    elo, ehi = eval_interval_arrays(e, lo, hi)
    X = np.random.default_rng(seed).uniform(lo[0], hi[0], (50, 2))
    X = np.vstack([X, lo, hi])
    v = E.eval_array(e, X)
    v = v[np.isfinite(v)]
    assert np.all(v >= elo[0]) and np.all(v <= ehi[0])


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 0.3), st.floats(0, 0.3))
def test_guard_verdicts_agree_with_points(a, b, wa, wb):
    g = E.parse_guard("x1^2+x2^2<1 && (x2<0 || x2>0 || x1>0)", 2)
    lo = np.array([[a, b]])
    hi = lo + [[wa, wb]]
    verdict = eval_guard_interval(g, lo, hi)[0]
    X = np.random.default_rng(0).uniform(lo[0], hi[0], (60, 2))
    pts = E.eval_guard_array(g, X)
    if verdict == TRUE:
        assert pts.all()
    elif verdict == FALSE:
        assert not pts.any()
