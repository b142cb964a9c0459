"""Energy-norm errors between nested discrete solutions or against a known
solution."""
import numpy as np

from .quadrature import gauss_legendre, tensor_rule

CHUNK = 4096


def energy_density(du, p, dp, mat):
    """Integrands of the displacement and pressure energy norms."""
    eps = 0.5 * (du + np.swapaxes(du, -1, -2))
    div = du[..., 0, 0] + du[..., 1, 1]
    eu = 2.0 * mat.tau * (eps ** 2).sum((-1, -2)) + mat.iota * div ** 2
    ep = mat.storage * p ** 2 + np.einsum("...a,ab,...b->...", dp, mat.kappa, dp)
    return eu, ep


def energy_error(coarse, fine, mat, extra_points=2):
    """Squared energy errors ``(err_u_sq, err_p_sq)`` of ``coarse`` against
    ``fine`` (both :class:`DiscreteFields`), with the fine mesh nested in the
    coarse one.

    Integration runs over the fine leaves; coarse values are evaluated in the
    ancestor leaf through the affine map between the reference squares.
    """
    fmesh, cmesh = fine.mesh, coarse.mesh
    anc, scale, shift = fmesh.ancestor_in(cmesh)
    cpos = np.searchsorted(cmesh.leaves, anc)
    rdeg = np.maximum(fine.dofmap.u_space.degrees, fine.dofmap.p_space.degrees)
    eu = ep = 0.0
    for q in np.unique(rdeg):
        ref, w = tensor_rule(gauss_legendre(int(q) + extra_points))
        sel_all = np.flatnonzero(rdeg == q)
        for lo in range(0, len(sel_all), CHUNK):
            sel = sel_all[lo:lo + CHUNK]
            rf = np.broadcast_to(ref, (len(sel),) + ref.shape)
            ff = fine.evaluate(sel, rf)
            rc = scale[sel, None, None] * rf + shift[sel, None, :]
            fc = coarse.evaluate(cpos[sel], rc)
            du = fc["du"] - ff["du"]
            a, b = energy_density(du, fc["p"] - ff["p"], fc["dp"] - ff["dp"], mat)
            wq = w[None, :] * ff["det"]
            eu += float((wq * a).sum())
            ep += float((wq * b).sum())
    return eu, ep


def energy_error_exact(fields, exact, mat, extra_points=4):
    """Squared energy errors of discrete ``fields`` against ``exact(x, y)``."""
    mesh = fields.mesh
    rdeg = np.maximum(fields.dofmap.u_space.degrees, fields.dofmap.p_space.degrees)
    eu = ep = 0.0
    for q in np.unique(rdeg):
        ref, w = tensor_rule(gauss_legendre(int(q) + extra_points))
        sel_all = np.flatnonzero(rdeg == q)
        for lo in range(0, len(sel_all), CHUNK):
            sel = sel_all[lo:lo + CHUNK]
            rf = np.broadcast_to(ref, (len(sel),) + ref.shape)
            f = fields.evaluate(sel, rf)
            e = exact(f["x"][..., 0], f["x"][..., 1])
            a, b = energy_density(f["du"] - e["du"], f["p"] - e["p"], f["dp"] - e["dp"], mat)
            wq = w[None, :] * f["det"]
            eu += float((wq * a).sum())
            ep += float((wq * b).sum())
    return eu, ep


def l2_error_exact(fields, exact, extra_points=4):
    """Squared L2 errors of displacement and pressure."""
    rdeg = np.maximum(fields.dofmap.u_space.degrees, fields.dofmap.p_space.degrees)
    eu = ep = 0.0
    for q in np.unique(rdeg):
        ref, w = tensor_rule(gauss_legendre(int(q) + extra_points))
        sel = np.flatnonzero(rdeg == q)
        f = fields.evaluate(sel, np.broadcast_to(ref, (len(sel),) + ref.shape))
        e = exact(f["x"][..., 0], f["x"][..., 1])
        wq = w[None, :] * f["det"]
        eu += float((wq * ((f["u"] - e["u"]) ** 2).sum(-1)).sum())
        ep += float((wq * (f["p"] - e["p"]) ** 2).sum())
    return eu, ep
