import numpy as np
import pytest
from scipy.sparse.linalg import lsqr

from biotcontact.mesh import DispTag, PressTag
from biotcontact.space import local_nodes


def free_tagger(mid, normal):
    """Pure Neumann tags (no Dirichlet edge) for single-element checks."""
    return DispTag.TRACTION, PressTag.FLUX


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def interpolate(space, fun):
    """Free coefficients reproducing ``fun`` at every local node (fails if
    ``fun`` is not in the space)."""
    mesh = space.mesh
    target = np.concatenate([fun(*mesh.map_points([c], local_nodes(int(d)))[0].T)
                             for c, d in zip(mesh.leaves, space.degrees)])
    coeffs = lsqr(space.prolongation, target, atol=1e-15, btol=1e-15)[0]
    assert np.abs(space.prolongation @ coeffs - target).max() < 1e-10
    return coeffs


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
