import numpy as np
import pytest

from ddfem.mesh import (
    GeometryError,
    MeshParseError,
    MeshValidationError,
    TriangleMesh,
    cook_membrane_map,
    map_mesh,
    quarter_annulus_map,
    read_mesh,
    structured_square_mesh,
    tag_boundary,
    write_mesh,
)


def test_smallest_square():
    mesh = structured_square_mesh(1)
    assert mesh.n_vertices == 4
    assert mesh.n_edges == 5
    assert mesh.n_cells == 2


def test_square_counts():
    mesh = structured_square_mesh(2)
    assert mesh.n_cells == 8
    assert mesh.n_vertices == 9
    assert structured_square_mesh(6).n_cells == 72


def test_zero_subdivisions_rejected():
    with pytest.raises(ValueError):
        structured_square_mesh(0)


@pytest.mark.parametrize("diagonal", [
    "lower-left-to-upper-right", "upper-left-to-lower-right"])
def test_mesh_invariants(diagonal):
    mesh = structured_square_mesh(4, diagonal)
    assert np.all(mesh.signed_areas > 0)
    for e in range(mesh.n_edges):
        inc = mesh.edge_cells(e)
        if len(inc) == 2:
            (c1, a1), (c2, a2) = inc
            assert mesh.cell_edge_signs[c1, a1] == -mesh.cell_edge_signs[c2, a2]
        else:
            assert len(inc) == 1
    assert mesh.n_vertices - mesh.n_edges + mesh.n_cells == 1
    assert mesh.signed_areas.sum() == pytest.approx(1.0, rel=1e-13)


def test_quarter_annulus_map_values():
    assert quarter_annulus_map(np.array([0.0, 0.0])) == pytest.approx([0.5, 0.0])
    assert quarter_annulus_map(np.array([0.5, 0.5])) == pytest.approx(
        [0.0, 1.0], abs=1e-15)


def test_map_mesh_identity_and_counts():
    mesh = structured_square_mesh(3)
    same = map_mesh(mesh, lambda p: p)
    assert np.array_equal(same.vertices, mesh.vertices)
    assert np.array_equal(same.cells, mesh.cells)
    mapped = map_mesh(mesh, lambda p: quarter_annulus_map(0.5 * p))
    assert mapped.n_vertices == mesh.n_vertices
    assert mapped.n_edges == mesh.n_edges
    assert mapped.n_cells == mesh.n_cells
    # polygonal area closure survives the map
    assert mapped.signed_areas.sum() == pytest.approx(
        mapped.boundary_polygon_area(), rel=1e-13)


def test_map_mesh_rejects_inverted_cells():
    mesh = structured_square_mesh(2)
    with pytest.raises(GeometryError):
        map_mesh(mesh, lambda p: np.column_stack([p[:, 1], p[:, 0]]))


def test_cook_map_corners():
    corners = cook_membrane_map(np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]]))
    assert np.allclose(corners, [[0, 0], [48, 44], [48, 60], [0, 44]])


def test_tag_boundary_all_traction():
    mesh = tag_boundary(structured_square_mesh(2), lambda mid: "t")
    assert set(mesh.boundary_tags.values()) == {"t"}
    mesh.validate()


def test_tag_boundary_cook():
    mesh = map_mesh(structured_square_mesh(6), cook_membrane_map)
    tagged = tag_boundary(mesh, lambda mid: "d" if mid[0] < 1e-9 else "t")
    d_edges = [e for e, t in tagged.boundary_tags.items() if t == "d"]
    assert len(d_edges) == 6
    assert np.all(tagged.edge_midpoints(np.array(d_edges))[:, 0] < 1e-9)


def test_roundtrip_bit_identical(tmp_path):
    mesh = tag_boundary(
        map_mesh(structured_square_mesh(3), cook_membrane_map),
        lambda mid: "d" if mid[0] < 1e-9 else "t")
    p1 = tmp_path / "a.msh"
    p2 = tmp_path / "b.msh"
    write_mesh(mesh, p1)
    write_mesh(read_mesh(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_read_small_square(tmp_path):
    mesh = tag_boundary(structured_square_mesh(1), lambda mid: "d")
    path = tmp_path / "square.msh"
    write_mesh(mesh, path)
    assert read_mesh(path).n_cells == 2


def test_parse_error_carries_line_number(tmp_path):
    path = tmp_path / "bad.msh"
    path.write_text("trimesh 2\nvertices 2\n0 0\nnot-a-number 1\n")
    with pytest.raises(MeshParseError, match=":4"):
        read_mesh(path)


def test_untagged_boundary_rejected(tmp_path):
    path = tmp_path / "untagged.msh"
    path.write_text(
        "trimesh 2\nvertices 3\n0.0 0.0\n1.0 0.0\n0.0 1.0\n"
        "cells 1\n0 1 2\nboundary 2\n0 1 d\n1 2 d\n")
    with pytest.raises(MeshValidationError):
        read_mesh(path)


def test_perforated_asset_loops():
    from ddfem.bench import default_stretch_mesh

    mesh = read_mesh(default_stretch_mesh())
    assert len(mesh.boundary_loops()) == 9  # outer square + 8 holes
    assert mesh.n_holes() == 8
    mesh.validate()


def test_inverted_cell_rejected():
    with pytest.raises(GeometryError):
        TriangleMesh(np.array([[0.0, 0], [1, 0], [0, 1]]),
                     np.array([[0, 2, 1]]))
