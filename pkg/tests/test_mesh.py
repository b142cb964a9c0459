import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biotcontact.errors import GeometryError, InvalidArgument, UnsupportedDegree
from biotcontact.mesh import (DispTag, PressTag, audit, from_quads, refine, refine_uniform,
                              set_degree, set_degrees, unit_square_mesh)


def _side_counts(mesh):
    interior, boundary = set(), set()
    for infos in mesh.topology.sides.values():
        for info in infos:
            (boundary if info.kind == "boundary" else interior).add(info.key)
    return len(interior), len(boundary)


def test_two_by_two_counts():
    mesh = unit_square_mesh(2)
    assert mesh.n_leaves == 4
    assert len(mesh.points) == 9
    assert _side_counts(mesh) == (4, 8)
    assert audit(mesh) == []


def test_diameters_uniform():
    mesh = unit_square_mesh(3)
    np.testing.assert_allclose(mesh.diameters(), np.sqrt(2) / 3)


def test_tags_of_square():
    mesh = unit_square_mesh(2)
    seen = {}
    for key, (ut, pt) in mesh.edge_tags.items():
        y = mesh.points[list(key), 1]
        seen.setdefault(ut, set()).add(pt)
        if np.all(y == 1.0):
            assert ut == DispTag.DIRICHLET and pt == PressTag.PRESSURE
        elif np.all(y == 0.0):
            assert ut == DispTag.CONTACT and pt == PressTag.FLUX
        else:
            assert ut == DispTag.TRACTION and pt == PressTag.FLUX
    assert len(mesh.edge_tags) == 8


def test_refine_all_is_conforming():
    mesh = refine(unit_square_mesh(2), [0, 1, 2, 3])
    assert mesh.n_leaves == 16
    assert mesh.topology.hanging_vertices(mesh) == []
    assert audit(mesh) == []
    np.testing.assert_allclose(mesh.diameters(), np.sqrt(2) / 4)


def test_refine_one_cell_hangs_two_nodes():
    mesh = refine(unit_square_mesh(2), [0])
    assert mesh.n_leaves == 7
    assert len(mesh.topology.hanging_vertices(mesh)) == 2
    assert audit(mesh) == []
    kinds = [i.kind for infos in mesh.topology.sides.values() for i in infos]
    assert kinds.count("master") == 2
    assert kinds.count("slave") == 4


def test_grandchild_forces_closure():
    mesh = refine(unit_square_mesh(2), [0])
    # child of cell 0 at the shared corner touches cells 1 and 2
    corner_child = int(mesh.cell_children[0, 2])
    fine = refine(mesh, [corner_child])
    assert audit(fine) == []
    assert not fine.is_leaf(1) and not fine.is_leaf(2)
    assert fine.is_leaf(3)


def test_refine_rejects_bad_ids():
    mesh = unit_square_mesh(2)
    with pytest.raises(InvalidArgument):
        refine(mesh, [])
    with pytest.raises(InvalidArgument):
        refine(mesh, [17])
    fine = refine(mesh, [0])
    with pytest.raises(InvalidArgument):
        refine(fine, [0])


def test_refinement_keeps_coarse_cells():
    coarse = unit_square_mesh(2)
    fine = refine(coarse, [1])
    np.testing.assert_array_equal(fine.cell_vertices[:coarse.n_cells], coarse.cell_vertices)
    np.testing.assert_array_equal(fine.points[:len(coarse.points)], coarse.points)
    anc, scale, shift = fine.ancestor_in(coarse)
    assert set(anc.tolist()) == {0, 1, 2, 3}
    assert np.all((scale == 1.0) | (scale == 0.5))


def test_ancestor_map_is_consistent():
    coarse = unit_square_mesh(2)
    fine = refine_uniform(refine(coarse, [0]), 1)
    anc, scale, shift = fine.ancestor_in(coarse)
    ref = np.array([[-0.3, 0.2], [0.9, -0.7]])
    for leaf, a, sc, sh in zip(fine.leaves, anc, scale, shift):
        x_fine = fine.map_points([leaf], ref)[0]
        x_coarse = coarse.map_points([a], sc * ref + sh)[0]
        np.testing.assert_allclose(x_fine, x_coarse, atol=1e-14)


def test_ancestor_rejects_unrelated():
    with pytest.raises(InvalidArgument):
        unit_square_mesh(2).ancestor_in(unit_square_mesh(3))


def test_set_degree_raises_neighbours():
    mesh = set_degree(unit_square_mesh(3), 4, 3)
    assert mesh.cell_r[4] == 3
    for n in mesh.neighbors(4):
        assert mesh.cell_r[n] == 2
    assert mesh.cell_r[0] == 1
    assert audit(mesh) == []


def test_set_degree_idempotent():
    once = set_degree(unit_square_mesh(3), 4, 3)
    twice = set_degree(once, 4, 3)
    np.testing.assert_array_equal(once.cell_r, twice.cell_r)
    np.testing.assert_array_equal(once.cell_s, twice.cell_s)


def test_single_cell_degree():
    mesh = set_degree(unit_square_mesh(1), 0, 5)
    assert mesh.cell_r[0] == 5 and mesh.cell_s[0] == 5


def test_degree_limits():
    mesh = unit_square_mesh(2)
    with pytest.raises(InvalidArgument):
        set_degree(mesh, 0, 0)
    with pytest.raises(UnsupportedDegree):
        set_degree(mesh, 0, 99)
    with pytest.raises(InvalidArgument):
        set_degree(refine(mesh, [0]), 0, 2)


def test_inverted_quad_rejected():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(GeometryError):
        from_quads(pts, [[0, 3, 2, 1]], lambda m, n: (DispTag.DIRICHLET, PressTag.PRESSURE))


def test_locate_roundtrip(rng):
    mesh = refine(unit_square_mesh(3), [0, 4])
    x = rng.uniform(0.0, 1.0, size=(50, 2))
    cells, ref = mesh.locate(x)
    assert np.all(np.isin(cells, mesh.leaves))
    assert np.all(np.abs(ref) <= 1.0 + 1e-12)
    back = np.array([mesh.map_points([c], r[None])[0, 0] for c, r in zip(cells, ref)])
    np.testing.assert_allclose(back, x, atol=1e-12)


def test_audit_reports_missing_dirichlet():
    mesh = unit_square_mesh(2, tagger=lambda m, n: (DispTag.TRACTION, PressTag.FLUX))
    issues = audit(mesh)
    assert any("Dirichlet displacement" in s for s in issues)
    assert any("Dirichlet pressure" in s for s in issues)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 10 ** 6), st.integers(1, 6)),
                min_size=1, max_size=6))
def test_random_operations_keep_mesh_valid(ops):
    mesh = unit_square_mesh(2)
    for is_refine, pick, deg in ops:
        leaf = int(mesh.leaves[pick % mesh.n_leaves])
        if is_refine and mesh.cell_level[leaf] < 4:
            mesh = refine(mesh, [leaf])
        else:
            mesh = set_degrees(mesh, {leaf: deg})
        assert audit(mesh) == []
        assert mesh.cell_r[leaf] >= 1
