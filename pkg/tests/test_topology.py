import numpy as np
import pytest

from cadcells.catalog import load_entry
from cadcells.cells import contains_array
from cadcells.oracles.closure import YES, closure_batch
from cadcells.oracles.config import OracleConfig
from cadcells.oracles.topology import FiberDescription, boundary_sample, fiber, locally_boundary_connected_at

CFG = OracleConfig()


@pytest.fixture(scope="module")
def trousers():
    return load_entry("trousers")


def test_slit_disk_boundary_has_circle_and_slit_points(rng):
    Ds = load_entry("cornet_slitdisk").cell("Ds")
    B = boundary_sample(Ds, 200, CFG, rng)
    assert len(B) >= 150
    assert not contains_array(Ds, B).any()
    r = np.hypot(B[:, 0], B[:, 1])
    on_circle = np.abs(r - 1) < 1e-9
    on_slit = (np.abs(B[:, 1]) < 1e-12) & (B[:, 0] <= 1e-12) & (B[:, 0] >= -1)
    assert on_circle.any() and on_slit.any()
    assert (on_circle | on_slit).all()


def test_boundary_points_are_closure_points(rng):
    c = load_entry("w_family", s=0).cell("C3111")
    B = boundary_sample(c, 40, CFG, rng)
    assert len(B) == 40
    assert (closure_batch(c, B, CFG, rng).kind == YES).all()
    # rays leave through the graph of f; the half-line is only reached in the limit
    f = -(B[:, 1] ** 2 + B[:, 2] ** 2) / B[:, 0]
    assert np.allclose(B[:, 3], f, rtol=1e-9, atol=1e-9)


def test_boundary_sample_rejects_bad_count(rng):
    with pytest.raises(ValueError):
        boundary_sample(load_entry("cornet_slitdisk").cell("Ds"), 0, CFG, rng)


def test_doubleton_fiber_over_the_slit(trousers, rng):
    d = fiber(trousers.cell("graph"), [-0.5, 0.0], CFG, rng)
    assert d.segments == []
    assert d.isolated_points == pytest.approx([-0.5, 0.0], abs=1e-6)


def test_fiber_of_the_cornet_side(trousers, rng):
    d = fiber(trousers.cell("cornet_graph"), [0.0, 0.0, 0.5], CFG, rng)
    assert d.segments == []
    assert d.isolated_points == pytest.approx([-0.5, 0.0], abs=1e-6)


def test_fiber_over_an_interior_point_is_one_point(trousers, rng):
    d = fiber(trousers.cell("graph"), [-0.3, -0.4], CFG, rng)
    assert d.segments == [] and d.isolated_points == pytest.approx([-0.3], abs=1e-6)


def test_fiber_of_a_sector_is_a_segment(rng):
    e = load_entry("sector_regular_bounds")
    d = fiber(e.cell("S"), [0.3, 0.4], CFG, rng)
    ut = np.sign(0.4) * np.sqrt((0.5 - 0.3) / 2) + 2 * 0.5 ** 0.5
    assert len(d.segments) == 1 and d.isolated_points == []
    assert d.segments[0] == pytest.approx((-ut, ut), abs=1e-6)


def test_unbounded_fibers_are_flagged(rng):
    c = load_entry("w_family", s=0).cell("C3113")
    d = fiber(c, [0.0, 0.0, 0.0], CFG, rng)
    assert len(d.segments) == 1
    # the whole line {0}^3 x R lies in the closure
    assert d.segments[0] == pytest.approx((-CFG.scan_limit, CFG.scan_limit), abs=1e-9)
    assert [tuple(u) for u in d.unbounded] == [(True, True)]


def test_fiber_rejects_base_outside_closure(trousers, rng):
    with pytest.raises(ValueError):
        fiber(trousers.cell("graph"), [2.0, 0.0], CFG, rng)


def test_fiber_description_matching():
    a = FiberDescription([0.0], [(0.0, 1.0)], [2.0])
    b = FiberDescription([0.0], [(1e-7, 1.0)], [2.0 + 1e-7])
    assert a.matches(b, 1e-6) and not a.matches(b, 1e-8)
    assert not a.matches(FiberDescription([0.0], [], [2.0]), 1.0)
    assert a.to_dict()["segments"] == [[0.0, 1.0]]


def test_slit_disk_fails_lbc_on_the_slit(rng):
    Ds = load_entry("cornet_slitdisk").cell("Ds")
    res = locally_boundary_connected_at(Ds, np.array([-0.5, 0.0]), CFG, rng)
    assert res.verdict == "fails-lbc"
    assert all(k == 2 for _, k in res.counts)
    assert res.witness_pairs


def test_slit_disk_is_lbc_on_the_circle(rng):
    Ds = load_entry("cornet_slitdisk").cell("Ds")
    res = locally_boundary_connected_at(Ds, np.array([0.6, 0.8]), CFG, rng)
    assert res.verdict == "consistent-with-lbc"


def test_cornet_fails_lbc_at_the_slit_image(rng):
    cornet = load_entry("cornet_slitdisk").cell("cornet")
    res = locally_boundary_connected_at(cornet, np.array([0.0, 0.0, 0.5]), CFG, rng)
    assert res.verdict == "fails-lbc"
