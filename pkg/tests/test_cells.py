import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cadcells import expr as E
from cadcells.catalog import load_entry
from cadcells.cells import IN, OUT, Cad, OrderingError, Region, Section, Sector, all_cells, ambient, \
    box_maybe_meets, build_level1, contains, contains_array, dimension, free_indices, lift, \
    partition_counts, project, sample


def _c3():
    zero = E.const(0)
    return Cad.build(3, [zero], {(2,): [zero], (2, 2): [zero]})


def test_level1_labels_and_kinds():
    cells = build_level1([E.const(-1), E.const(1)])
    assert [c.label for c in cells] == ["C1", "C2", "C3", "C4", "C5"]
    assert [dimension(c) for c in cells] == [1, 0, 1, 0, 1]


def test_level1_rejects_unordered_points():
    with pytest.raises(OrderingError):
        build_level1([E.const(1), E.const(0)])


def test_c3_structure():
    cad = _c3()
    assert [c.label for c in cad.cells] == ["C111", "C211", "C221", "C222", "C223", "C231", "C311"]
    assert [dimension(c) for c in cad.cells] == [3, 2, 1, 0, 1, 2, 3]
    assert cad.cell("C222") is cad.levels[2][3]


def test_partition_of_c3(rng):
    counts = partition_counts(_c3(), 3000, rng)
    for level in counts.values():
        assert level["bad"] == 0


def test_stack_order_is_checked():
    x = E.parse("x1", 1)
    with pytest.raises(OrderingError):
        Cad.build(2, [E.const(0)], {(3,): [x, E.const(0)]})


def test_w_family_cells_and_membership():
    e = load_entry("w_family", s=0)
    assert len(e.cads["main"].cells) == 11
    c = e.cell("C3112")
    assert contains(c, [1, 0, 0, 0]) == IN
    assert contains(c, [1, 1, 0, -1]) == IN
    assert contains(c, [1, 1, 0, -1.5]) == OUT
    assert dimension(c) == 3 and ambient(c) == 4
    assert free_indices(c) == [0, 1, 2]
    assert project(c).label == "C311"


def test_lift_and_contains_agree(rng):
    c = load_entry("w_family", s=0).cell("C3111")
    X = sample(c, 500, rng)
    assert contains_array(c, X).all()
    Y, ok = lift(c, X[:, free_indices(c)])
    assert ok.all() and np.allclose(Y, X)


def test_region_slit_is_excluded():
    Ds = load_entry("cornet_slitdisk").cell("Ds")
    assert isinstance(Ds, Region)
    assert contains(Ds, [-0.5, 0.0]) == OUT
    assert contains(Ds, [0.5, 0.0]) == IN
    assert contains(Ds, [-0.5, 1e-9]) == IN


def test_samples_lie_in_their_cells(rng):
    e = load_entry("sector_regular_bounds")
    for name in ("Ds", "cornet", "P", "S", "cs", "H"):
        c = e.cell(name)
        X = sample(c, 200, rng)
        assert len(X) == 200
        assert contains_array(c, X).all(), name


def test_box_test_never_misses_members(rng):
    e = load_entry("trousers")
    for name in ("graph", "cornet_graph", "Ds"):
        c = e.cell(name)
        X = sample(c, 300, rng)
        r = rng.uniform(0, 1e-3, X.shape)
        assert box_maybe_meets(c, X - r, X + r).all()


def test_box_test_separates_far_boxes():
    Ds = load_entry("cornet_slitdisk").cell("Ds")
    lo = np.array([[2.0, 2.0], [-0.6, -0.01]])
    hi = np.array([[3.0, 3.0], [-0.4, 0.01]])
    assert list(box_maybe_meets(Ds, lo, hi)) == [False, True]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["C1111", "C2111", "C2221", "C3111", "C3112", "C3113", "C2311"]),
       st.integers(0, 2 ** 31), st.floats(1e-9, 1e-2))
def test_box_soundness_over_w_family(label, seed, width):
    c = load_entry("w_family", s=0).cell(label)
    X = sample(c, 40, np.random.default_rng(seed))
    assert box_maybe_meets(c, X - width, X + width).all()


def test_every_cad_cell_has_a_label():
    for c in all_cells(_c3()):
        assert c.label.startswith("C")
