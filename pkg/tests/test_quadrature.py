import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg

from biotcontact.errors import InvalidArgument, UnsupportedDegree
from biotcontact.quadrature import (MAX_DEGREE, eval_shape, gauss_legendre, gauss_lobatto,
                                    interpolation_matrix, legendre_coefficients, shape_basis,
                                    tabulate, tensor_rule)


def test_three_point_lobatto_rule():
    rule = gauss_lobatto(3)
    np.testing.assert_allclose(rule.points, [-1.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(rule.weights, [1 / 3, 4 / 3, 1 / 3], atol=1e-15)


def test_four_point_lobatto_nodes():
    rule = gauss_lobatto(4)
    s = 1.0 / np.sqrt(5.0)
    np.testing.assert_allclose(rule.points, [-1, -s, s, 1], atol=1e-15)
    np.testing.assert_allclose(rule.weights, [1 / 6, 5 / 6, 5 / 6, 1 / 6], atol=1e-15)


@pytest.mark.parametrize("n", range(2, MAX_DEGREE + 2))
def test_lobatto_exactness(n):
    rule = gauss_lobatto(n)
    for k in range(2 * n - 2):
        exact = (1 - (-1) ** (k + 1)) / (k + 1)
        assert abs(rule.integrate(lambda x: x ** k) - exact) < 1e-13
    assert rule.exact_degree == 2 * n - 3
    assert np.all(np.diff(rule.points) > 0)
    assert abs(rule.weights.sum() - 2.0) < 1e-14


@given(st.integers(1, 12), st.lists(st.floats(-1, 1), min_size=1, max_size=24))
@settings(max_examples=60, deadline=None)
def test_legendre_rule_integrates_random_polynomials(n, coeffs):
    rule = gauss_legendre(n)
    c = np.array(coeffs[: 2 * n])
    integral = npleg.legval(1.0, npleg.legint(c)) - npleg.legval(-1.0, npleg.legint(c))
    assert abs(rule.integrate(lambda x: npleg.legval(x, c)) - integral) < 1e-12 * (1 + np.abs(c).sum())


def test_rule_arguments_validated():
    with pytest.raises(InvalidArgument):
        gauss_lobatto(1)
    with pytest.raises(InvalidArgument):
        gauss_legendre(0)
    with pytest.raises(UnsupportedDegree):
        shape_basis(MAX_DEGREE + 1)


@pytest.mark.parametrize("p", [1, 2, 5, MAX_DEGREE])
def test_lagrange_basis_is_nodal_and_partition_of_unity(p):
    b = shape_basis(p)
    np.testing.assert_allclose(tabulate(b, b.nodes), np.eye(p + 1), atol=1e-11)
    x = np.linspace(-1, 1, 37)
    np.testing.assert_allclose(tabulate(b, x).sum(axis=1), 1.0, atol=1e-11)
    np.testing.assert_allclose(tabulate(b, x, 1).sum(axis=1), 0.0, atol=1e-9)


def test_derivatives_of_reproduced_polynomial():
    p = 4
    b = shape_basis(p)
    f = lambda x: 3 * x ** 4 - x ** 3 + 2 * x - 1
    df = lambda x: 12 * x ** 3 - 3 * x ** 2 + 2
    d2f = lambda x: 36 * x ** 2 - 6 * x
    x = np.linspace(-1, 1, 11)
    vals = f(b.nodes)
    np.testing.assert_allclose(tabulate(b, x) @ vals, f(x), atol=1e-12)
    np.testing.assert_allclose(tabulate(b, x, 1) @ vals, df(x), atol=1e-11)
    np.testing.assert_allclose(tabulate(b, x, 2) @ vals, d2f(x), atol=1e-10)
    v, d = eval_shape(b, 2, 0.3)
    assert abs(v - tabulate(b, [0.3])[0, 2]) < 1e-14
    assert abs(d - tabulate(b, [0.3], 1)[0, 2]) < 1e-14


def test_interpolation_matrix_and_tensor_rule():
    M = interpolation_matrix(3, np.array([-1.0, 0.3, 1.0]))
    assert M.shape == (3, 4)
    np.testing.assert_allclose(M.sum(axis=1), 1.0, atol=1e-13)
    pts, w = tensor_rule(gauss_legendre(3))
    assert pts.shape == (9, 2)
    assert abs(w.sum() - 4.0) < 1e-14
    # x index runs fastest
    assert pts[1, 1] == pts[0, 1] and pts[1, 0] > pts[0, 0]


def test_legendre_coefficients_of_tensor_polynomial():
    p = 3
    t = shape_basis(p).nodes
    X, Y = np.meshgrid(t, t, indexing="xy")
    # P_2(x) * P_1(y)
    nodal = 0.5 * (3 * X ** 2 - 1) * Y
    c = legendre_coefficients(nodal)
    expected = np.zeros((4, 4))
    expected[1, 2] = 1.0  # [y degree, x degree]
    np.testing.assert_allclose(c, expected, atol=1e-12)
