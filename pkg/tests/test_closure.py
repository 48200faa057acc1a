import numpy as np
import pytest

from cadcells.catalog import load_entry
from cadcells.cells import box_maybe_meets, contains_array
from cadcells.oracles.closure import NO, UNKNOWN, YES, certify_ball, closure_batch, closure_contains, \
    separation_radius, witness_search
from cadcells.oracles.config import OracleConfig

CFG = OracleConfig()


@pytest.fixture(scope="module")
def w0():
    return load_entry("w_family", s=0)


def test_member_is_a_closure_point(w0):
    v = closure_contains(w0.cell("C3112"), [1.0, 1.0, 0.0, -1.0], CFG)
    assert v.kind == YES and v.distance == 0.0


def test_half_line_below_r_is_in_the_closure(w0):
    v = closure_contains(w0.cell("C3112"), [0.0, 0.0, 0.0, -1.0], CFG, seed=3)
    assert v.kind == YES
    radii = [eps for eps, _ in v.witness_chain]
    assert radii == [2.0 ** -k for k in range(1, CFG.eps_levels + 1)]
    c = w0.cell("C3112")
    for eps, w in v.witness_chain:
        assert contains_array(c, np.asarray(w)[None, :])[0]
        assert np.linalg.norm(np.asarray(w) - [0, 0, 0, -1]) < eps


def test_half_line_above_r_is_not(w0):
    v = closure_contains(w0.cell("C3112"), [0.0, 0.0, 0.0, 1.0], CFG, seed=3)
    assert v.kind == NO
    radius, box = v.separation
    assert radius > 0
    lo, hi = np.array(box).T
    assert not box_maybe_meets(w0.cell("C3112"), lo[None, :], hi[None, :])[0]


def test_shift_moves_the_tip():
    e = load_entry("w_family", s=2)
    c = e.cell("C3112")
    assert closure_contains(c, [0, 0, 0, 1.5], CFG, seed=1).kind == YES
    assert closure_contains(c, [0, 0, 0, 2.5], CFG, seed=1).kind == NO


def test_slit_points_are_boundary_points():
    Ds = load_entry("cornet_slitdisk").cell("Ds")
    assert closure_contains(Ds, [-0.5, 0.0], CFG).kind == YES
    assert closure_contains(Ds, [1.0, 0.0], CFG).kind == YES
    assert closure_contains(Ds, [1.5, 0.0], CFG).kind == NO


def test_sandwich_separation_radius_matches_brute_force():
    e = load_entry("trousers")
    # the middle cell over the slit disk is the graph of f
    rho = separation_radius(e.cell("graph"), np.array([-0.5, 0.0, -0.25]), CFG)
    assert 0.15 <= rho <= 0.1768
    assert certify_ball(e.cell("graph"), np.array([-0.5, 0.0, -0.25]), 0.15)


def test_batch_agrees_with_single_calls(w0, rng):
    c = w0.cell("C3112")
    P = np.array([[0, 0, 0, -2.0], [0, 0, 0, 3.0], [1, 0, 0, 0.0], [0, 0, 1.0, 0.0]])
    res = closure_batch(c, P, CFG, rng)
    assert list(res.kind) == [YES, NO, YES, NO]


def test_union_of_cells(w0):
    cells = [w0.cell("C3111"), w0.cell("C3113")]
    assert closure_contains(cells, [0.0, 0.0, 0.0, 5.0], CFG).kind == YES


def test_unknown_is_reported_when_budget_is_tiny(w0, rng):
    tiny = CFG.with_(candidates=1, stall_steps=1, eps_levels=30)
    P = np.array([[0.0, 0.0, 0.0, -1.0]])
    res = closure_batch(w0.cell("C3112"), P, tiny, rng, fallback=False)
    assert res.kind[0] in (YES, UNKNOWN)


def test_witness_levels_are_monotone_in_distance(w0, rng):
    c = w0.cell("C3112")
    P = np.array([[0.0, 0.0, 0.0, -1.0], [0.0, 0.0, 0.0, 1.0]])
    lv, d, w = witness_search(c, P, CFG, rng)
    assert lv[0] == CFG.eps_levels and d[0] < CFG.eps_min
    assert d[1] >= 1.0 - 1e-9


def test_point_dimension_mismatch(w0):
    with pytest.raises(ValueError):
        closure_contains(w0.cell("C3112"), [0.0, 0.0], CFG)
