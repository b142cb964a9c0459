import numpy as np
import pytest
from scipy.sparse.linalg import lsqr

from biotcontact.errors import InvalidArgument, InvalidGap
from biotcontact.fields import DiscreteFields
from biotcontact.mesh import refine, set_degree, set_degrees, unit_square_mesh
from biotcontact.space import ScalarSpace, build_dof_map, contact_constraints, local_nodes


def _hp_mesh():
    mesh = refine(unit_square_mesh(2, 2), [0])
    mesh = refine(mesh, [int(mesh.cell_children[0, 2])])
    leaves = mesh.leaves.tolist()
    return set_degrees(mesh, {leaves[0]: 3, leaves[-1]: 4})


def _local_targets(dm, space, fun):
    mesh = dm.mesh
    out = []
    for k, c in enumerate(mesh.leaves):
        ref = local_nodes(int(space.degrees[k]))
        x = mesh.map_points([c], ref)[0]
        out.append(fun(x[:, 0], x[:, 1]))
    return np.concatenate(out)


@pytest.mark.parametrize("m,r", [(1, 1), (2, 2), (3, 3)])
def test_uniform_counts(m, r):
    dm = build_dof_map(unit_square_mesh(m, r))
    side = m * r + 1
    # top row of nodes is Dirichlet for both fields
    assert dm.u_space.n_raw == side ** 2
    assert dm.u_space.n_free == side ** 2 - side
    assert dm.n_u == 2 * (side ** 2 - side)
    assert dm.n_p == side ** 2 - side
    assert dm.n_total == 3 * (side ** 2 - side)


def test_hanging_constraints_count():
    dm = build_dof_map(refine(unit_square_mesh(2, 1), [0]))
    # 14 vertices, 3 top Dirichlet, 2 hanging
    assert dm.u_space.n_raw == 14
    assert dm.u_space.n_free == 9


@pytest.mark.parametrize("deg", [1, 2])
def test_polynomials_reproduced(deg):
    dm = build_dof_map(_hp_mesh())
    space = dm.u_space

    def f(x, y):
        return (1.0 - y) * (x ** (deg - 1) + 0.3 * y ** (deg - 1))

    target = _local_targets(dm, space, f)
    coeffs = lsqr(space.prolongation, target, atol=1e-14, btol=1e-14)[0]
    np.testing.assert_allclose(space.prolongation @ coeffs, target, atol=1e-9)


def test_field_is_continuous(rng):
    mesh = _hp_mesh()
    dm = build_dof_map(mesh)
    fields = DiscreteFields(dm, rng.standard_normal(dm.n_u), rng.standard_normal(dm.n_p))
    topo = mesh.topology
    t = np.linspace(-0.9, 0.9, 7)
    checked = 0
    for k, c in enumerate(mesh.leaves.tolist()):
        for info in topo.sides[c]:
            if info.kind not in ("conforming", "slave"):
                continue
            a, b = mesh.points[list(info.key)]
            x = a + 0.5 * (t[:, None] + 1.0) * (b - a)
            vals = []
            for cell in (c, info.neighbors[0]):
                ref, inside = mesh._inverse_map(cell, x)
                assert inside.all()
                pos = np.searchsorted(mesh.leaves, cell)
                out = fields.evaluate(np.full(len(x), pos), np.clip(ref, -1, 1)[:, None])
                vals.append(np.column_stack([out["u"][:, 0], out["p"][:, 0]]))
            np.testing.assert_allclose(vals[0], vals[1], atol=1e-11)
            checked += 1
    assert checked > 10


def test_dirichlet_edge_vanishes(rng):
    dm = build_dof_map(_hp_mesh())
    fields = DiscreteFields(dm, rng.standard_normal(dm.n_u), rng.standard_normal(dm.n_p))
    x = np.column_stack([np.linspace(0, 1, 11), np.ones(11)])
    out = fields.at_points(x)
    assert np.abs(out["u"]).max() < 1e-12
    assert np.abs(out["p"]).max() < 1e-12


def test_contact_constraint_points():
    mesh = set_degree(unit_square_mesh(2, 2), 0, 3)
    dm = build_dof_map(mesh)
    cs = contact_constraints(mesh, dm, lambda x, y: 0.1 + 0 * x)
    assert np.allclose(cs.points[:, 1], 0.0)
    assert len(cs) == len(np.unique(cs.points[:, 0].round(12)))
    assert np.allclose(cs.normals, [0.0, -1.0])
    assert cs.is_bound_form
    np.testing.assert_allclose(np.abs(cs.coef), 1.0)
    u = np.zeros(dm.n_u)
    np.testing.assert_allclose(cs.gap(u), 0.1)


def test_contact_gap_must_be_finite():
    mesh = unit_square_mesh(2)
    dm = build_dof_map(mesh)
    with pytest.raises(InvalidGap):
        contact_constraints(mesh, dm, lambda x, y: np.full_like(x, np.nan))


def test_degree_array_length_checked():
    mesh = unit_square_mesh(2)
    with pytest.raises(InvalidArgument):
        ScalarSpace(mesh, [1, 1], lambda t: False)
