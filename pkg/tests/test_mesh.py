import numpy as np
import pytest

from gnse.exceptions import MeshError
from gnse.mesh import (TriMesh, mesh_stats, read_text, red_refine, refine_to,
                       unit_square_initial, write_text, write_vtk)


@pytest.fixture(scope="module")
def meshes():
    return refine_to(5)


def test_initial_mesh():
    m = unit_square_initial()
    assert (m.n_vertices, m.n_edges, m.n_triangles) == (5, 8, 4)
    assert m.level == 0
    np.testing.assert_allclose(m.areas, 0.25)
    assert mesh_stats(m).h == pytest.approx(1.0)
    assert m.boundary_vertex_flags[:4].all() and not m.boundary_vertex_flags[4]


def test_first_refinement():
    m = red_refine(unit_square_initial())
    assert (m.n_vertices, m.n_edges, m.n_triangles) == (13, 28, 16)
    assert mesh_stats(m).h == pytest.approx(0.5)


def test_counts_and_invariants(meshes):
    chunk0 = mesh_stats(meshes[0]).chunkiness
    for i, m in enumerate(meshes):
        st = mesh_stats(m)
        assert st.n_triangles == 4 * 4 ** i
        assert st.h == pytest.approx(2.0 ** -i, rel=1e-14)
        assert st.chunkiness == pytest.approx(chunk0, rel=1e-12)
        assert m.n_vertices - m.n_edges + m.n_triangles == 1
        assert m.areas.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(m.signed_areas > 0)
        counts = np.bincount(m.triangle_edges.ravel(), minlength=m.n_edges)
        assert np.all(counts[m.boundary_edge_flags] == 1)
        assert np.all(counts[~m.boundary_edge_flags] == 2)
    assert meshes[5].n_triangles == 4096
    assert mesh_stats(meshes[3]).h == pytest.approx(1 / 8)


def test_boundary_markers(meshes):
    m = meshes[3]
    x, y = m.vertices.T
    on_boundary = np.isclose(x, 0) | np.isclose(x, 1) | np.isclose(y, 0) | np.isclose(y, 1)
    assert np.array_equal(on_boundary, m.boundary_vertex_flags)
    mid = m.vertices[m.edges[m.boundary_edges]].mean(axis=1)
    n = m.boundary_edge_normals
    # outward: moving along the normal leaves the square
    out = mid + 1e-3 * n
    assert np.all((out < 0) | (out > 1), axis=1).sum() == 0  # one coordinate leaves
    assert np.all(np.any((out < 0) | (out > 1), axis=1))


def test_parent_map_roundtrip(meshes):
    for coarse, fine in zip(meshes[:-1], meshes[1:]):
        a, b = fine.parent_map.T
        np.testing.assert_array_equal(
            0.5 * (coarse.vertices[a] + coarse.vertices[b]), fine.vertices)
        assert fine.parent is coarse
        # children lie inside their parents
        G = coarse.barycentric_gradients[fine.parent_triangles]
        P0 = coarse.corners[fine.parent_triangles, 0]
        centroids = fine.corners.mean(axis=1)
        lam = np.einsum("tkd,td->tk", G, centroids - P0)
        lam[:, 0] += 1
        assert np.all(lam > 0)


def test_degenerate_triangle_rejected():
    m = TriMesh(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.array([[0, 1, 2]]))
    with pytest.raises(MeshError):
        mesh_stats(m)
    cw = TriMesh(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]), np.array([[0, 1, 2]]))
    with pytest.raises(MeshError):
        cw.areas


def test_text_roundtrip(tmp_path, meshes):
    path = tmp_path / "mesh.txt"
    write_text(meshes[2], path)
    back = read_text(path)
    assert np.array_equal(back.vertices, meshes[2].vertices)
    assert np.array_equal(back.triangles, meshes[2].triangles)


def test_vtk_export(tmp_path, meshes):
    m = meshes[1]
    path = tmp_path / "mesh.vtk"
    write_vtk(m, path, {"p": np.arange(m.n_vertices, dtype=float), "u": m.vertices})
    text = path.read_text()
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert f"CELLS {m.n_triangles} {4 * m.n_triangles}" in text
    assert "SCALARS p double 1" in text and "VECTORS u double" in text
