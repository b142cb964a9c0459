import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from numpy.polynomial import legendre

from biotcontact.adaptivity import (H, P, SIGMA_STAR, MarkDecision, apply_decision, decay_slope,
                                    decide, doerfler_mark, hp_decide, shell_magnitudes)
from biotcontact.errors import InvalidArgument, NothingToMark
from biotcontact.fields import DiscreteFields
from biotcontact.mesh import audit, unit_square_mesh
from biotcontact.quadrature import shape_basis
from biotcontact.space import build_dof_map

from conftest import interpolate


def _nodal_from_legendre(coef):
    """GLL nodal values ``[j, i]`` of sum c[i, j] L_i(x) L_j(y)."""
    p = coef.shape[0] - 1
    t = shape_basis(p).nodes
    xx, yy = np.meshgrid(t, t, indexing="xy")
    return legendre.legval2d(xx, yy, coef)


def _shells(mags):
    """Coefficient array with magnitude ``mags[k-1]`` on shell k (put at (k, 0))."""
    p = len(mags)
    c = np.zeros((p + 1, p + 1))
    c[0, 0] = 1.0
    for k, m in enumerate(mags, start=1):
        c[k, 0] = m
    return c


def _min_subset(eta, theta):
    """Smallest cardinality of any subset reaching the bulk criterion."""
    total = sum(eta)
    for size in range(1, len(eta) + 1):
        for sub in itertools.combinations(range(len(eta)), size):
            if sum(eta[i] for i in sub) >= theta * total:
                return size
    return len(eta)


def test_doerfler_example():
    np.testing.assert_array_equal(doerfler_mark([4.0, 3.0, 2.0, 1.0], 0.5), [0, 1])
    assert _min_subset([4.0, 3.0, 2.0, 1.0], 0.5) == 2


def test_doerfler_theta_one_and_single():
    np.testing.assert_array_equal(doerfler_mark([1.0, 0.0, 2.0, 3.0], 1.0), [0, 2, 3])
    for theta in (0.01, 0.5, 1.0):
        np.testing.assert_array_equal(doerfler_mark([0.7], theta), [0])


def test_doerfler_ties_by_index():
    np.testing.assert_array_equal(doerfler_mark([1.0, 1.0, 1.0, 1.0], 0.5), [0, 1])


def test_doerfler_errors():
    with pytest.raises(NothingToMark):
        doerfler_mark([0.0, 0.0], 0.5)
    with pytest.raises(InvalidArgument):
        doerfler_mark([1.0, -1.0], 0.5)
    with pytest.raises(InvalidArgument):
        doerfler_mark([1.0], 0.0)
    with pytest.raises(InvalidArgument):
        doerfler_mark([1.0], 1.5)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=9),
       st.floats(0.05, 1.0))
def test_doerfler_bulk_and_minimal(eta, theta):
    eta = np.array(eta)
    assume(eta.sum() > 1e-6)
    marked = doerfler_mark(eta, theta)
    total = eta.sum()
    assert eta[marked].sum() >= theta * total * (1 - 1e-12)
    # dropping the smallest member breaks the criterion
    smallest = marked[np.argmin(eta[marked])]
    rest = np.setdiff1d(marked, [smallest])
    assert eta[rest].sum() < theta * total
    # the sorted prefix has minimal cardinality
    assert len(marked) == _min_subset(list(eta), theta * (1 - 1e-12))


def test_decay_slope_arithmetic():
    k = np.arange(1, 6)
    assert decay_slope(4.0 ** -k) == pytest.approx(np.log(4.0))
    assert decay_slope([1.0]) is None


def test_exponential_decay_is_p():
    for r in (2, 3, 5):
        c = _shells(4.0 ** -np.arange(1, r + 1))
        u = _nodal_from_legendre(c)
        mags, _ = shell_magnitudes([u])
        np.testing.assert_allclose(mags, 4.0 ** -np.arange(1, r + 1), rtol=1e-9)
        assert hp_decide([[u, 0 * u], [u]]) == P


def test_algebraic_decay_is_h():
    for r in (3, 4, 6):
        c = _shells(np.arange(1, r + 1, dtype=float) ** -2)
        u = _nodal_from_legendre(c)
        assert hp_decide([[u, u], [u]]) == H


def test_degree_one_is_h():
    u = np.array([[0.0, 1.0], [1.0, 2.0]])
    assert hp_decide([[u, u], [u]]) == H


def test_slowest_field_decides():
    r = 4
    fast = _nodal_from_legendre(_shells(8.0 ** -np.arange(1, r + 1)))
    slow = _nodal_from_legendre(_shells(np.arange(1, r + 1, dtype=float) ** -2))
    assert hp_decide([[fast, fast], [fast]]) == P
    assert hp_decide([[fast, fast], [slow]]) == H


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.floats(1e-6, 1e6), st.integers(0, 10 ** 6))
def test_hp_decision_scale_invariant(r, scale, seed):
    rng = np.random.default_rng(seed)
    decay = rng.uniform(0.2, 3.0)
    c = rng.standard_normal((r + 1, r + 1)) * np.exp(
        -decay * np.maximum.outer(np.arange(r + 1), np.arange(r + 1)))
    u = _nodal_from_legendre(c)
    p = _nodal_from_legendre(c.T)
    assert hp_decide([[u, p], [p]]) == hp_decide([[scale * u, scale * p], [scale * p]])


def test_decide_and_apply():
    mesh = unit_square_mesh(4, 2)
    dm = build_dof_map(mesh)
    rng = np.random.default_rng(0)
    fields = DiscreteFields(dm, rng.standard_normal(dm.n_u), rng.standard_normal(dm.n_p))
    eta = np.zeros(mesh.n_leaves)
    eta[[0, 5]] = [3.0, 1.0]
    dec = decide(mesh, fields, eta, theta=0.9, hp=False)
    np.testing.assert_array_equal(dec.marked, mesh.leaves[[0, 5]])
    assert dec.actions == [H, H]
    fine = apply_decision(mesh, dec)
    assert fine.n_leaves == mesh.n_leaves + 6
    assert audit(fine) == []
    pdec = MarkDecision(np.array([3]), [P])
    raised = apply_decision(mesh, pdec)
    assert raised.cell_r[3] == 3 and raised.cell_s[3] == 3
    assert audit(raised) == []


def test_smooth_solution_prefers_p():
    mesh = unit_square_mesh(2, 4)
    dm = build_dof_map(mesh)
    ux = interpolate(dm.u_space, lambda x, y: (1 - y) * np.exp(0.5 * x))
    p = interpolate(dm.p_space, lambda x, y: (1 - y) * np.cos(x))
    fields = DiscreteFields(dm, np.concatenate([ux, ux]), p)
    dec = decide(mesh, fields, np.ones(4), theta=1.0, sigma_star=SIGMA_STAR)
    assert dec.actions == [P] * 4
