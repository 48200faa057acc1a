"""ASCII PLY export of catalog cells.

Two-dimensional cells become masked-grid triangulations over their free
coordinates, lifted into the ambient space; other cells become point
clouds.  Boundary samples go to a separate vertex-only file.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import CatalogError, load_entry
from .cells import Cell, ambient, dimension, free_indices, lift, sample
from .oracles.config import OracleConfig
from .oracles.topology import _region_exit, _region_of, boundary_sample

MIN_RESOLUTION = 8
_AXES = ("x", "y", "z", "w")


class MeshError(ValueError):
    pass


@dataclass
class Mesh:
    vertices: np.ndarray          # (V, ambient)
    faces: np.ndarray             # (F, 3) vertex indices, empty for point clouds

    def euler_characteristic(self) -> int:
        if not len(self.faces):
            return len(self.vertices)
        edges = np.sort(np.vstack([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [0, 2]]]), axis=1)
        n_edges = len(np.unique(edges, axis=0))
        n_vertices = len(np.unique(self.faces))
        return n_vertices - n_edges + len(self.faces)


def _free_box(c: Cell, rng, box: float) -> np.ndarray:
    idx = free_indices(c)
    X = sample(c, 20_000, rng, box=box)[:, idx]
    X = X[np.all(np.isfinite(X), axis=1)]
    lo, hi = X.min(axis=0), X.max(axis=0)
    pad = 0.02 * np.maximum(hi - lo, 1e-9)
    return np.column_stack([np.maximum(lo - pad, -box), np.minimum(hi + pad, box)])


def _edges_stay(c: Cell, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Segments between free-coordinate points that stay in the cell.

    Midpoints catch open-set boundaries; a region level is also checked
    with certified ray exits so that a measure-zero cut is never bridged.
    """
    ok = lift(c, (A + B) / 2)[1]
    if _region_of(c) is not None and len(A):
        d = B - A
        length = np.linalg.norm(d, axis=1)
        s, _ = _region_exit(c, A, d / np.maximum(length, 1e-300)[:, None], length)
        ok &= s >= length * (1 - 1e-12)
    return ok


def surface_mesh(c: Cell, resolution: int, rng=None, box: float = 8.0) -> Mesh:
    """Masked-grid triangulation of a 2-dimensional cell."""
    if resolution < MIN_RESOLUTION:
        raise MeshError(f"resolution must be at least {MIN_RESOLUTION}")
    if len(free_indices(c)) != 2:
        raise MeshError(f"{c.label} is not parametrised by two free coordinates")
    rng = np.random.default_rng(0) if rng is None else rng
    (a0, a1), (b0, b1) = _free_box(c, rng, box)
    # an odd offset keeps grid lines off cuts along rational coordinates
    u = np.linspace(a0, a1, resolution + 1) + (a1 - a0) / (7.0 * resolution)
    v = np.linspace(b0, b1, resolution + 1) + (b1 - b0) / (11.0 * resolution)
    U, V = np.meshgrid(u, v, indexing="ij")
    theta = np.column_stack([U.ravel(), V.ravel()])
    X, valid = lift(c, theta)
    valid &= np.all(np.isfinite(X), axis=1)
    n = resolution + 1
    i, j = np.meshgrid(np.arange(resolution), np.arange(resolution), indexing="ij")
    p00 = (i * n + j).ravel()
    p10, p01, p11 = p00 + n, p00 + 1, p00 + n + 1
    tris = np.vstack([np.column_stack([p00, p10, p11]), np.column_stack([p00, p11, p01])])
    keep = valid[tris].all(axis=1)
    tris = tris[keep]
    if len(tris):
        cen = theta[tris].mean(axis=1)
        keep = lift(c, cen)[1]
        for a, b in ((0, 1), (1, 2), (0, 2)):
            keep &= _edges_stay(c, theta[tris[:, a]], theta[tris[:, b]])
        tris = tris[keep]
    used, faces = np.unique(tris, return_inverse=True)
    return Mesh(X[used], faces.reshape(-1, 3) if len(tris) else np.zeros((0, 3), dtype=int))


def point_cloud(c: Cell, n: int, rng=None, box: float = 8.0) -> Mesh:
    rng = np.random.default_rng(0) if rng is None else rng
    X = sample(c, n, rng, box=box)
    X = X[np.all(np.isfinite(X) & (np.abs(X) <= box), axis=1)]
    return Mesh(X, np.zeros((0, 3), dtype=int))


def write_ply(path: Path, mesh: Mesh, comment: str = "") -> None:
    V = np.asarray(mesh.vertices, dtype=float)
    k = V.shape[1]
    if k > len(_AXES):
        raise MeshError(f"cannot write {k}-dimensional vertices")
    if k < 3:
        V = np.column_stack([V, np.zeros((len(V), 3 - k))])
    lines = ["ply", "format ascii 1.0"]
    if comment:
        lines.append(f"comment {comment}")
    lines.append(f"element vertex {len(V)}")
    lines += [f"property double {a}" for a in _AXES[:V.shape[1]]]
    if len(mesh.faces):
        lines += [f"element face {len(mesh.faces)}", "property list uchar int vertex_indices"]
    lines.append("end_header")
    lines += [" ".join(f"{x:.17g}" for x in row) for row in V]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path: Path) -> Mesh:
    """Reader for the files written above (used by tests and round trips)."""
    lines = Path(path).read_text().splitlines()
    nv = nf = 0
    props = 0
    h = 0
    for h, line in enumerate(lines):
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            nv = int(parts[2])
        elif parts[:2] == ["element", "face"]:
            nf = int(parts[2])
        elif parts[:2] == ["property", "double"]:
            props += 1
        elif line == "end_header":
            break
    body = lines[h + 1:]
    V = np.array([[float(x) for x in r.split()] for r in body[:nv]]).reshape(nv, props)
    F = np.array([[int(x) for x in r.split()[1:]] for r in body[nv:nv + nf]], dtype=int).reshape(nf, 3)
    return Mesh(V, F)


def export_mesh(entry: str, obj: str, resolution: int = 64, out: str | Path | None = None,
                boundary_points: int = 400, seed: int = 0) -> list[Path]:
    """Write ``obj`` of catalog ``entry`` and its boundary samples; returns the paths."""
    if resolution < MIN_RESOLUTION:
        raise MeshError(f"resolution must be at least {MIN_RESOLUTION}")
    e = load_entry(entry)
    try:
        c = e.cell(obj)
    except CatalogError as err:
        raise MeshError(str(err)) from None
    rng = np.random.default_rng(seed)
    out = Path(out) if out else Path(f"{entry}_{obj}.ply")
    if dimension(c) == 2:
        mesh = surface_mesh(c, resolution, rng)
    else:
        mesh = point_cloud(c, resolution * resolution, rng)
    write_ply(out, mesh, f"{entry} {obj} ambient {ambient(c)} dimension {dimension(c)}")
    bpath = out.with_name(out.stem + ".boundary.ply")
    B = boundary_sample(c, boundary_points, OracleConfig(), rng)
    write_ply(bpath, Mesh(B, np.zeros((0, 3), dtype=int)), f"{entry} {obj} boundary samples")
    return [out, bpath]
