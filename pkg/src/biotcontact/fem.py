"""Reference tabulation and geometry helpers shared by assembly, estimation
and error evaluation."""
from functools import lru_cache

import numpy as np

from .quadrature import gauss_legendre, shape_basis, tabulate, tensor_rule

# d^2/dxi deta of the four bilinear shape functions
_BILINEAR_XY = 0.25 * np.array([1.0, -1.0, 1.0, -1.0])


def basis_tables(p, ref, hessian=False):
    """Tensor Lagrange basis of degree ``p`` at reference points ``ref``.

    Returns values ``(m, n)``, gradients ``(m, n, 2)`` and, on request,
    Hessians ``(m, n, 2, 2)`` with ``n = (p + 1)**2`` (x index fastest).
    """
    b = shape_basis(p)
    x, y = ref[:, 0], ref[:, 1]
    lx, ly = tabulate(b, x), tabulate(b, y)
    dx, dy = tabulate(b, x, 1), tabulate(b, y, 1)
    m = len(ref)
    val = (ly[:, :, None] * lx[:, None, :]).reshape(m, -1)
    grad = np.stack([(ly[:, :, None] * dx[:, None, :]).reshape(m, -1),
                     (dy[:, :, None] * lx[:, None, :]).reshape(m, -1)], axis=-1)
    if not hessian:
        return val, grad
    ddx, ddy = tabulate(b, x, 2), tabulate(b, y, 2)
    hxx = (ly[:, :, None] * ddx[:, None, :]).reshape(m, -1)
    hxy = (dy[:, :, None] * dx[:, None, :]).reshape(m, -1)
    hyy = (ddy[:, :, None] * lx[:, None, :]).reshape(m, -1)
    hess = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
    return val, grad, hess


@lru_cache(maxsize=None)
def volume_rule(n):
    pts, w = tensor_rule(gauss_legendre(n))
    pts.flags.writeable = False
    w.flags.writeable = False
    return pts, w


class Geometry:
    """Bilinear element maps evaluated at reference points for a cell batch."""

    def __init__(self, mesh, cells, ref):
        self.cells = np.asarray(cells)
        corners = mesh.corners(self.cells)  # (e, 4, 2)
        x, y = ref[:, 0], ref[:, 1]
        shp = 0.25 * np.column_stack([(1 - x) * (1 - y), (1 + x) * (1 - y),
                                      (1 + x) * (1 + y), (1 - x) * (1 + y)])
        dshp = 0.25 * np.stack([
            np.column_stack([-(1 - y), (1 - y), (1 + y), -(1 + y)]),
            np.column_stack([-(1 - x), -(1 + x), (1 + x), (1 - x)])], axis=-1)
        self.x = np.einsum("mk,ekd->emd", shp, corners)
        # J[e, m, a, k] = d x_a / d xi_k
        self.jac = np.einsum("mkj,eki->emij", dshp, corners)
        self.det = self.jac[..., 0, 0] * self.jac[..., 1, 1] - self.jac[..., 0, 1] * self.jac[..., 1, 0]
        inv = np.empty_like(self.jac)
        inv[..., 0, 0] = self.jac[..., 1, 1]
        inv[..., 1, 1] = self.jac[..., 0, 0]
        inv[..., 0, 1] = -self.jac[..., 0, 1]
        inv[..., 1, 0] = -self.jac[..., 1, 0]
        self.inv = inv / self.det[..., None, None]
        # d^2 x_a / dxi deta, constant per element
        self.x_xy = np.einsum("k,eka->ea", _BILINEAR_XY, corners)

    def grad(self, dref):
        """Physical gradients from reference gradients ``(m, n, 2)``."""
        return np.einsum("emka,mnk->emna", self.inv, dref)

    def hessian(self, dref, href, grad_phys):
        """Physical Hessians ``(e, m, n, 2, 2)`` of the mapped basis."""
        # remove the curvature of the bilinear map before pulling back
        corr = np.einsum("emna,ea->emn", grad_phys, self.x_xy)
        h = np.broadcast_to(href, grad_phys.shape[:3] + (2, 2)).copy()
        h[..., 0, 1] -= corr
        h[..., 1, 0] -= corr
        return np.einsum("emka,emnkl,emlb->emnab", self.inv, h, self.inv)


def eval_field(geom, coeffs, val, grad_ref, hess_ref=None):
    """Values, gradients (and Hessians) of a scalar field with local nodal
    coefficients ``coeffs`` (e, n) at the reference points of ``geom``."""
    v = coeffs @ val.T
    gp = geom.grad(grad_ref)
    g = np.einsum("emna,en->ema", gp, coeffs)
    if hess_ref is None:
        return v, g
    hp = geom.hessian(grad_ref, hess_ref, gp)
    return v, g, np.einsum("emnab,en->emab", hp, coeffs)


def point_jacobians(corners, ref):
    """Bilinear map data at per-cell reference points.

    ``corners`` is ``(t, 4, 2)``, ``ref`` is ``(t, m, 2)``. Returns physical
    points ``(t, m, 2)`` and inverse Jacobians ``(t, m, 2, 2)`` and the
    Jacobian determinants ``(t, m)``.
    """
    x, y = ref[..., 0], ref[..., 1]
    shp = 0.25 * np.stack([(1 - x) * (1 - y), (1 + x) * (1 - y),
                           (1 + x) * (1 + y), (1 - x) * (1 + y)], axis=-1)
    dx = 0.25 * np.stack([-(1 - y), (1 - y), (1 + y), -(1 + y)], axis=-1)
    dy = 0.25 * np.stack([-(1 - x), -(1 + x), (1 + x), (1 - x)], axis=-1)
    pts = np.einsum("tmk,tkd->tmd", shp, corners)
    jac = np.stack([np.einsum("tmk,tkd->tmd", dx, corners),
                    np.einsum("tmk,tkd->tmd", dy, corners)], axis=-1)  # [.., a, k]
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1]
    inv[..., 1, 1] = jac[..., 0, 0]
    inv[..., 0, 1] = -jac[..., 0, 1]
    inv[..., 1, 0] = -jac[..., 1, 0]
    return pts, inv / det[..., None, None], det


def evaluate_local(p, coeffs, ref, inv=None):
    """Values and physical gradients of degree-``p`` fields at per-cell points.

    ``coeffs`` is ``(t, k, (p+1)**2)`` for ``k`` fields sharing a cell,
    ``ref`` is ``(t, m, 2)``. Returns values ``(t, k, m)`` and, when ``inv``
    is given, gradients ``(t, k, m, 2)``.
    """
    b = shape_basis(p)
    n = p + 1
    t, m = ref.shape[:2]
    xs, ys = ref[..., 0].ravel(), ref[..., 1].ravel()
    lx = tabulate(b, xs).reshape(t, m, n)
    ly = tabulate(b, ys).reshape(t, m, n)
    c = coeffs.reshape(coeffs.shape[0], coeffs.shape[1], n, n)  # [t, k, j, i]
    cx = np.einsum("tkji,tmi->tkmj", c, lx)
    val = np.einsum("tkmj,tmj->tkm", cx, ly)
    if inv is None:
        return val
    dlx = tabulate(b, xs, 1).reshape(t, m, n)
    dly = tabulate(b, ys, 1).reshape(t, m, n)
    dxi = np.einsum("tkji,tmi,tmj->tkm", c, dlx, ly)
    deta = np.einsum("tkmj,tmj->tkm", cx, dly)
    gref = np.stack([dxi, deta], axis=-1)
    grad = np.einsum("tmka,tqmk->tqma", inv, gref)
    return val, grad
