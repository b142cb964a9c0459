import numpy as np

from biotcontact.fields import DiscreteFields
from biotcontact.mesh import refine, set_degree, unit_square_mesh
from biotcontact.space import build_dof_map
from biotcontact.vtk import VTK_QUAD, read_vtk, write_vtk

from conftest import interpolate


def test_roundtrip(tmp_path):
    mesh = set_degree(refine(unit_square_mesh(2, 2), [0]), 2, 3)
    dm = build_dof_map(mesh)
    ux = interpolate(dm.u_space, lambda x, y: (1 - y) * x)
    uy = interpolate(dm.u_space, lambda x, y: (1 - y) * y)
    p = interpolate(dm.p_space, lambda x, y: (1 - y) * (x + 2))
    fields = DiscreteFields(dm, np.concatenate([ux, uy]), p)
    eta = np.linspace(0.0, 1.0, mesh.n_leaves)
    path = tmp_path / "mesh.vtk"
    write_vtk(path, mesh, fields, {"eta_sq": eta, "degree": mesh.cell_r[mesh.leaves]})
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0\n")
    data = read_vtk(path)
    n = mesh.n_leaves
    assert data["points"].shape == (4 * n, 3)
    assert data["cells"].shape == (n, 4)
    assert np.all(data["cell_types"] == VTK_QUAD)
    x, y = data["points"][:, 0], data["points"][:, 1]
    np.testing.assert_allclose(data["point_data"]["u"][:, 0], (1 - y) * x, atol=1e-12)
    np.testing.assert_allclose(data["point_data"]["u"][:, 1], (1 - y) * y, atol=1e-12)
    np.testing.assert_allclose(data["point_data"]["p"], (1 - y) * (x + 2), atol=1e-12)
    np.testing.assert_allclose(data["cell_data"]["eta_sq"], eta)
    np.testing.assert_array_equal(data["cell_data"]["degree"], mesh.cell_r[mesh.leaves])
    # counter-clockwise quads: positive signed area
    c = data["points"][data["cells"]][..., :2]
    area = 0.5 * np.sum(c[:, :, 0] * np.roll(c[:, :, 1], -1, 1)
                        - np.roll(c[:, :, 0], -1, 1) * c[:, :, 1], axis=1)
    assert np.all(area > 0)
    assert area.sum() == 1.0


def test_mesh_only(tmp_path):
    path = tmp_path / "m.vtk"
    write_vtk(path, unit_square_mesh(3))
    data = read_vtk(path)
    assert data["cells"].shape == (9, 4)
    assert data["point_data"] == {} and data["cell_data"] == {}
