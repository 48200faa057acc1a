import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cadcells import expr as E


def test_parse_and_evaluate_polynomial():
    e = E.parse("x1^2 + 2*x1*x2 - 1/3", 2)
    assert E.eval_point(e, [1.0, 2.0]) == pytest.approx(1 + 4 - 1 / 3)
    assert E.arity(e) == 2


def test_rational_constants_are_exact():
    e = E.parse("1/3", 0)
    assert isinstance(e, E.Const) or E.eval_point(e, []) == pytest.approx(1 / 3)
    assert E.const(Fraction(1, 3)).value == Fraction(1, 3)


def test_negative_exponent_and_functions():
    assert E.eval_point(E.parse("2^-1", 0), []) == 0.5
    assert E.eval_point(E.parse("root4(16)", 0), []) == 2.0
    assert E.eval_point(E.parse("abs(-2)^3", 0), []) == 8.0
    assert E.eval_point(E.parse("sign(-3) + sign(0)", 0), []) == -1.0


def test_golden_ratio_constant():
    assert E.eval_point(E.parse("-(1+sqrt(5))/2", 0), []) == pytest.approx(-(1 + math.sqrt(5)) / 2, abs=1e-15)


def test_piecewise_branches_and_default():
    e = E.parse("piecewise{ x1<0 && x2<0 : x1 ; _ : 0 }", 2)
    assert E.eval_point(e, [-1.0, -2.0]) == -1.0
    assert E.eval_point(e, [1.0, -2.0]) == 0.0
    assert E.eval_point(e, [-1.0, 0.0]) == 0.0


def test_min_max():
    e = E.parse("min(x1, x2) + max(x1, 1/3)", 2)
    assert E.eval_point(e, [0.0, 5.0]) == pytest.approx(1 / 3)


def test_undefined_points_give_none_and_nan():
    assert E.eval_point(E.parse("sqrt(x1)", 1), [-1.0]) is None
    assert E.eval_point(E.parse("1/x1", 1), [0.0]) is None
    out = E.eval_array(E.parse("sqrt(x1)", 1), np.array([[-1.0], [4.0]]))
    assert math.isnan(out[0]) and out[1] == 2.0


@pytest.mark.parametrize("text", ["x3", "1+", "sqrt(", "foo(x1)", "x1 +* 2", "piecewise{ x1<0 : 1 }"])
def test_parse_errors(text):
    with pytest.raises(E.ParseError):
        E.parse(text, 2)


def test_guard_text_round_trip():
    g = E.parse_guard("x1^2+x2^2<1 && !(x1>0) || x2 == 0", 2)
    g2 = E.parse_guard(E.guard_text(g), 2)
    X = np.random.default_rng(0).uniform(-1, 1, (200, 2))
    X[:20, 1] = 0.0
    assert np.array_equal(E.eval_guard_array(g, X), E.eval_guard_array(g2, X))


def test_substitute_composes():
    f = E.parse("x1^2 + x2", 2)
    phi = [E.parse("x1-x3", 3), E.parse("x2", 3)]
    h = E.substitute(f, phi)
    assert E.eval_point(h, [2.0, 1.0, 0.5]) == pytest.approx(1.5 ** 2 + 1)


def test_vectorized_matches_pointwise(rng):
    e = E.parse("piecewise{ x1 > 0 : sqrt(x1)*x2 ; _ : -x2^2 } + abs(x1)", 2)
    X = rng.uniform(-2, 2, (300, 2))
    vec = E.eval_array(e, X)
    pts = np.array([E.eval_point(e, x) for x in X])
    assert np.allclose(vec, pts, rtol=0, atol=0)


# random expression trees for round trips
_leaf = st.one_of(
    st.integers(1, 3).map(lambda i: f"x{i}"),
    st.fractions(min_value=-5, max_value=5, max_denominator=7).map(lambda q: f"({q})"),
)


def _extend(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(children, st.integers(1, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
        children.map(lambda c: f"abs({c})"),
        children.map(lambda c: f"-({c})"),
        st.tuples(children, children).map(lambda t: f"max({t[0]}, {t[1]})"),
    )


_exprs = st.recursive(_leaf, _extend, max_leaves=8)


@settings(max_examples=150, deadline=None)
@given(_exprs, st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_text_round_trip_preserves_values(text, p):
    e = E.parse(text, 3)
    e2 = E.parse(E.to_text(e), 3)
    assert e2 == e
    a, b = E.eval_point(e, p), E.eval_point(e2, p)
    assert a == b or (a is None and b is None)
