"""One-dimensional quadrature rules and tensor Lagrange bases on [-1, 1]^2."""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import InvalidArgument, UnsupportedDegree

MAX_DEGREE = 12


@dataclass(frozen=True)
class QuadratureRule1D:
    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __len__(self):
        return len(self.points)

    def integrate(self, f):
        return float(np.dot(self.weights, f(self.points)))


def _legendre_and_derivative(n, x):
    """Return P_n(x) and P_n'(x) by the three-term recurrence."""
    p0 = np.ones_like(x)
    if n == 0:
        return p0, np.zeros_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    # P_n' = n (x P_n - P_{n-1}) / (x^2 - 1), only used away from +-1
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


@lru_cache(maxsize=None)
def _gauss_lobatto(n):
    m = n - 1
    # interior points are the roots of P_m'; Chebyshev-Gauss-Lobatto start
    x = -np.cos(np.pi * np.arange(1, m) / m)
    for _ in range(100):
        p, dp = _legendre_and_derivative(m, x)
        # P_m'' from the Legendre ODE: (1-x^2) P'' = 2x P' - m(m+1) P
        d2p = (2.0 * x * dp - m * (m + 1) * p) / (1.0 - x * x)
        dx = dp / d2p
        x = x - dx
        if np.max(np.abs(dx), initial=0.0) < 1e-14:
            break
    pts = np.concatenate(([-1.0], x, [1.0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        pm, _ = _legendre_and_derivative(m, pts)
    pm[0], pm[-1] = (-1.0) ** m, 1.0
    w = 2.0 / (m * (m + 1) * pm * pm)
    # symmetrize to remove round-off asymmetry
    pts = 0.5 * (pts - pts[::-1])
    w = 0.5 * (w + w[::-1])
    pts.flags.writeable = False
    w.flags.writeable = False
    return pts, w


def gauss_lobatto(n):
    """Gauss-Lobatto rule with ``n`` points, exact up to degree ``2n - 3``."""
    if int(n) != n or n < 2:
        raise InvalidArgument(f"Gauss-Lobatto rule needs n >= 2, got {n}")
    pts, w = _gauss_lobatto(int(n))
    return QuadratureRule1D(pts, w, 2 * int(n) - 3)


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    pts, w = npleg.leggauss(n)
    pts.flags.writeable = False
    w.flags.writeable = False
    return pts, w


def gauss_legendre(n):
    """Gauss-Legendre rule with ``n`` points, exact up to degree ``2n - 1``."""
    if int(n) != n or n < 1:
        raise InvalidArgument(f"Gauss-Legendre rule needs n >= 1, got {n}")
    pts, w = _gauss_legendre(int(n))
    return QuadratureRule1D(pts, w, 2 * int(n) - 1)


def tensor_rule(rule):
    """Tensor product of a 1D rule; points ordered with x fastest."""
    xx, yy = np.meshgrid(rule.points, rule.points, indexing="xy")
    wx, wy = np.meshgrid(rule.weights, rule.weights, indexing="xy")
    return np.column_stack([xx.ravel(), yy.ravel()]), (wx * wy).ravel()


@dataclass(frozen=True)
class ShapeBasis:
    """Lagrange basis of degree ``degree`` on the Gauss-Lobatto nodes.

    ``legendre_coeffs[k, i]`` is the coefficient of P_k in the i-th Lagrange
    polynomial, which gives exact derivatives of any order.
    """

    degree: int
    nodes: np.ndarray = field(repr=False)
    legendre_coeffs: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.degree + 1


@lru_cache(maxsize=None)
def shape_basis(degree):
    if int(degree) != degree or degree < 1:
        raise InvalidArgument(f"degree must be a positive integer, got {degree}")
    if degree > MAX_DEGREE:
        raise UnsupportedDegree(f"degree {degree} exceeds the maximum {MAX_DEGREE}")
    nodes = gauss_lobatto(degree + 1).points
    coeffs = np.linalg.inv(npleg.legvander(nodes, degree))
    coeffs.flags.writeable = False
    return ShapeBasis(int(degree), nodes, coeffs)


def tabulate(basis, x, derivative=0):
    """Values (or derivatives) of all basis functions at points ``x``.

    Returns an array of shape ``(len(x), degree + 1)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c = basis.legendre_coeffs
    if derivative:
        c = npleg.legder(c, m=derivative, axis=0)
        if c.shape[0] == 0:
            return np.zeros((len(x), basis.size))
    return npleg.legvander(x, c.shape[0] - 1) @ c


def eval_shape(basis, i, x):
    """Value and derivative of the ``i``-th Lagrange polynomial at ``x``."""
    if int(i) != i or not 0 <= i <= basis.degree:
        raise InvalidArgument(f"basis index {i} out of range 0..{basis.degree}")
    v = tabulate(basis, x)[:, i]
    d = tabulate(basis, x, 1)[:, i]
    if np.ndim(x) == 0:
        return float(v[0]), float(d[0])
    return v, d


def interpolation_matrix(src_degree, x):
    """Matrix evaluating the degree-``src_degree`` nodal interpolant at ``x``."""
    return tabulate(shape_basis(src_degree), x)


def legendre_coefficients(nodal):
    """Tensor Legendre coefficients of a nodal field given on a GLL grid.

    ``nodal`` has shape ``(p+1, p+1)`` indexed ``[j, i]`` (y index first).
    """
    p = nodal.shape[0] - 1
    c = shape_basis(p).legendre_coeffs
    return c @ nodal @ c.T
