import numpy as np
import pytest

from cadcells.catalog import load_entry
from cadcells.cells import contains_array
from cadcells.cli import main
from cadcells.mesh import Mesh, MeshError, export_mesh, read_ply, surface_mesh, write_ply


@pytest.fixture(scope="module")
def ds_mesh():
    return surface_mesh(load_entry("cornet_slitdisk").cell("Ds"), 32, np.random.default_rng(0))


def test_slit_disk_mesh_is_a_disk(ds_mesh):
    assert len(ds_mesh.faces) > 500
    assert ds_mesh.euler_characteristic() == 1


def test_slit_disk_mesh_never_bridges_the_slit(ds_mesh):
    V, F = ds_mesh.vertices, ds_mesh.faces
    assert contains_array(load_entry("cornet_slitdisk").cell("Ds"), V).all()
    for a, b in ((0, 1), (1, 2), (2, 0)):
        P, Q = V[F[:, a]], V[F[:, b]]
        cross = P[:, 1] * Q[:, 1] < 0
        t = P[cross, 1] / (P[cross, 1] - Q[cross, 1])
        x = P[cross, 0] + t * (Q[cross, 0] - P[cross, 0])
        assert (x > 0).all()


def test_cornet_mesh_is_a_disk():
    cornet = load_entry("cornet_slitdisk").cell("cornet")
    m = surface_mesh(cornet, 128, np.random.default_rng(0))
    assert m.vertices.shape[1] == 3
    assert contains_array(cornet, m.vertices).all()
    assert m.euler_characteristic() == 1


def test_ply_round_trip(tmp_path):
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.5]], dtype=float)
    m = Mesh(V, np.array([[0, 1, 2]]))
    write_ply(tmp_path / "t.ply", m, "triangle")
    back = read_ply(tmp_path / "t.ply")
    assert np.array_equal(back.vertices, V) and np.array_equal(back.faces, m.faces)
    assert (tmp_path / "t.ply").read_text().startswith("ply\nformat ascii 1.0\n")


def test_export_writes_surface_and_boundary(tmp_path):
    paths = export_mesh("trousers", "graph", 16, tmp_path / "g.ply", boundary_points=50)
    assert [p.name for p in paths] == ["g.ply", "g.boundary.ply"]
    surf, bnd = read_ply(paths[0]), read_ply(paths[1])
    assert len(surf.faces) and surf.vertices.shape[1] == 3
    assert len(bnd.vertices) and not len(bnd.faces)


def test_export_of_a_four_dimensional_cell_is_a_point_cloud(tmp_path):
    p, _ = export_mesh("sector_regular_bounds", "cs", 8, tmp_path / "cs.ply", boundary_points=20)
    m = read_ply(p)
    assert m.vertices.shape == (64, 4) and not len(m.faces)


def test_export_errors(tmp_path):
    with pytest.raises(MeshError):
        export_mesh("trousers", "graph", 7, tmp_path / "x.ply")
    with pytest.raises(MeshError):
        export_mesh("trousers", "nope", 16, tmp_path / "x.ply")


def test_mesh_command(tmp_path, capsys):
    out = tmp_path / "ds.ply"
    assert main(["mesh", "cornet_slitdisk", "Ds", "--res", "12", "--out", str(out)]) == 0
    printed = capsys.readouterr().out.split()
    assert printed == [str(out), str(tmp_path / "ds.boundary.ply")]
