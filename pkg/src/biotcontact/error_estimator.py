"""Residual a posteriori error indicators for the Biot contact problem.

Per leaf ``T`` the displacement indicator collects the strong momentum
residual, the jumps of the effective-stress traction across interior sides
and the traction mismatch on Neumann and contact sides; the pressure
indicator does the same for the mass balance and the flux. The contact
boundary additionally carries a functional built from two pointwise cut-offs
of the reconstructed multiplier and the gap.

Interior sides contribute ``h_e / (2 r_e) ||jump||^2`` to both adjacent
leaves; on a hanging side each half is integrated separately with its own
length as ``h_e``.
"""
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .assembly import _as_scalar_fun, _as_vector_fun, _groups, side_reference_points
from .errors import InvalidArgument, PreconditionError
from .fem import Geometry, basis_tables, eval_field, volume_rule
from .fields import DiscreteFields, stress_traction
from .mesh import SIDES, DispTag, PressTag
from .quadrature import gauss_legendre, interpolation_matrix

CUTOFF = 45.0 / 469.0
COUPLING = 90.0 / 469.0


@dataclass
class EstimatorReport:
    """Squared indicators per leaf (ordered like ``mesh.leaves``)."""

    eta_u_sq: np.ndarray
    eta_p_sq: np.ndarray
    contact_terms: dict
    contact_local: np.ndarray
    edge_jumps: list = field(default_factory=list)
    pointwise: dict = field(default_factory=dict, repr=False)

    @property
    def contact_total(self):
        return float(sum(self.contact_terms.values()))

    @property
    def total(self):
        return float(self.eta_u_sq.sum() + self.eta_p_sq.sum()) + self.contact_total

    @property
    def local(self):
        """Per-leaf squared indicator used for marking (contact share included,
        clipped at zero since the coupling term has no sign)."""
        return np.maximum(self.eta_u_sq + self.eta_p_sq + self.contact_local, 0.0)


# ---------------------------------------------------------------- side geometry
def _side_points(mesh, cell, side):
    v = mesh.cell_vertices[cell]
    i, j = SIDES[side]
    return mesh.points[v[i]], mesh.points[v[j]]


def _outward_normal(mesh, cell, side):
    a, b = _side_points(mesh, cell, side)
    t = b - a
    n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
    if np.dot(n, 0.5 * (a + b) - mesh.points[mesh.cell_vertices[cell]].mean(axis=0)) < 0:
        n = -n
    return n


def _param_map(mesh, cell_a, side_a, cell_b, side_b):
    """Affine map ``t_b = k * t_a + d`` between side parameters sharing points."""
    a0, a1 = _side_points(mesh, cell_a, side_a)
    b0, b1 = _side_points(mesh, cell_b, side_b)
    d = b1 - b0
    proj = lambda x: 2.0 * np.dot(x - b0, d) / np.dot(d, d) - 1.0
    lo, hi = proj(a0), proj(a1)
    return 0.5 * (hi - lo), 0.5 * (hi + lo)


@dataclass
class _SideTask:
    pos_a: int
    side_a: int
    normal: np.ndarray
    length: float
    r_e: int
    s_e: int
    key: tuple
    pos_b: int = -1
    side_b: int = -1
    k: float = 1.0
    d: float = 0.0
    tags: tuple = None


def _interior_tasks(mesh, dofmap, keys=None):
    """One task per interior integration segment (conforming side or half of a
    hanging side), seen from the cell owning the full segment."""
    topo = mesh.topology
    us, ps = dofmap.u_space, dofmap.p_space
    li = us.leaf_index
    out = []
    for c in mesh.leaves.tolist():
        for info in topo.sides[c]:
            if info.kind == "conforming":
                other = info.neighbors[0]
                if other < c:
                    continue
                seg_key, deg_key = info.key, info.key
            elif info.kind == "slave":
                other = info.neighbors[0]
                seg_key, deg_key = info.key, info.master_key
            else:
                continue
            if keys is not None and seg_key not in keys and deg_key not in keys:
                continue
            side_b = next(s.side for s in topo.sides[other] if s.key == deg_key)
            k, d = _param_map(mesh, c, info.side, other, side_b)
            a, b = _side_points(mesh, c, info.side)
            out.append(_SideTask(li[c], info.side, _outward_normal(mesh, c, info.side),
                                 float(np.linalg.norm(b - a)), int(us.edge_degree[deg_key]),
                                 int(ps.edge_degree[deg_key]), seg_key, li[other], side_b, k, d))
    return out


def _boundary_tasks(mesh, dofmap):
    topo = mesh.topology
    us, ps = dofmap.u_space, dofmap.p_space
    li = us.leaf_index
    out = []
    for c in mesh.leaves.tolist():
        for info in topo.sides[c]:
            if info.kind != "boundary":
                continue
            a, b = _side_points(mesh, c, info.side)
            out.append(_SideTask(li[c], info.side, _outward_normal(mesh, c, info.side),
                                 float(np.linalg.norm(b - a)), int(us.edge_degree[info.key]),
                                 int(ps.edge_degree[info.key]), info.key,
                                 tags=mesh.edge_tags[info.key]))
    return out


def _n_points(dofmap, task):
    us = dofmap.u_space
    deg = int(us.degrees[task.pos_a])
    if task.pos_b >= 0:
        deg = max(deg, int(us.degrees[task.pos_b]))
    return deg + 2


def _batched(dofmap, tasks):
    """Yield ``(tasks, rule, ref_a, ref_b)`` for tasks sharing a point count."""
    by_q = defaultdict(list)
    for t in tasks:
        by_q[_n_points(dofmap, t)].append(t)
    for q in sorted(by_q):
        group = by_q[q]
        rule = gauss_legendre(q)
        ref_a = np.stack([side_reference_points(t.side_a, rule.points) for t in group])
        ref_b = None
        if group[0].pos_b >= 0:
            ref_b = np.stack([side_reference_points(t.side_b, t.k * rule.points + t.d)
                              for t in group])
        yield group, rule, ref_a, ref_b


def _jump_norms(fields, mat, group, rule, ref_a, ref_b):
    """Squared L2 norms of the traction and flux jumps for a task batch."""
    fa = fields.evaluate([t.pos_a for t in group], ref_a)
    fb = fields.evaluate([t.pos_b for t in group], ref_b)
    n = np.stack([t.normal for t in group])[:, None, :]
    ju = stress_traction(fa["du"], n, mat) - stress_traction(fb["du"], n, mat)
    jp = np.einsum("tma,ab,tmb->tm", fa["dp"] - fb["dp"], mat.kappa, n)
    wq = rule.weights[None, :] * 0.5 * np.array([t.length for t in group])[:, None]
    return (wq * (ju ** 2).sum(-1)).sum(1), (wq * jp ** 2).sum(1)


# ---------------------------------------------------------------------- public
def edge_jump(mesh, dofmap, mat, u, p, key):
    """L2 norms of the traction and flux jumps across an interior edge.

    A coarse side carrying a hanging node is integrated over its two halves.
    """
    key = tuple(sorted(int(k) for k in key))
    if key in mesh.edge_tags:
        raise InvalidArgument(f"edge {key} lies on the boundary")
    tasks = _interior_tasks(mesh, dofmap, keys={key})
    if not tasks:
        raise InvalidArgument(f"edge {key} is not an interior edge of the mesh")
    fields = DiscreteFields(dofmap, u, p)
    su = sp_ = 0.0
    for group, rule, ra, rb in _batched(dofmap, tasks):
        a, b = _jump_norms(fields, mat, group, rule, ra, rb)
        su += a.sum()
        sp_ += b.sum()
    return float(np.sqrt(su)), float(np.sqrt(sp_))


def estimate(mesh, dofmap, mat, solution, lam, g, fe=(0.0, 0.0), ff=0.0, traction=None,
             flux=None):
    """Squared residual indicators of a discrete solution.

    ``solution`` needs ``u``, ``p`` and ``constraints``; ``lam`` holds the
    nodal values of the reconstructed multiplier (one per constraint).
    ``traction``/``flux`` are the prescribed Neumann data, zero by default.
    """
    constraints = getattr(solution, "constraints", None)
    has_contact = constraints is not None and len(constraints) > 0
    if has_contact and lam is None:
        raise PreconditionError("contact multiplier must be reconstructed first")
    if has_contact and len(lam) != len(constraints):
        raise PreconditionError("multiplier does not match the constraint set")
    fe_fun = _as_vector_fun(fe)
    ff_fun = _as_scalar_fun(ff)
    us, ps = dofmap.u_space, dofmap.p_space
    fields = DiscreteFields(dofmap, solution.u, solution.p)
    leaves = mesh.leaves
    nl = len(leaves)
    h_t = mesh.diameters(leaves)
    eta_u = np.zeros(nl)
    eta_p = np.zeros(nl)
    kap = mat.kappa

    # volume residuals
    for (r, s), pos in _groups(dofmap):
        cells = leaves[pos]
        ref, w = volume_rule(max(r, s) + 2)
        geo = Geometry(mesh, cells, ref)
        wq = w[None, :] * geo.det
        vu, du, hu = basis_tables(r, ref, hessian=True)
        vp, dp, hp = basis_tables(s, ref, hessian=True)
        loc = fields._local(us, (fields.ux_loc, fields.uy_loc), pos)
        _, gx, hx = eval_field(geo, loc[:, 0], vu, du, hu)
        _, gy, hy = eval_field(geo, loc[:, 1], vu, du, hu)
        pv, pg, ph = eval_field(geo, fields._local(ps, (fields.p_loc,), pos)[:, 0], vp, dp, hp)
        lap_x = hx[..., 0, 0] + hx[..., 1, 1]
        lap_y = hy[..., 0, 0] + hy[..., 1, 1]
        # gradient of div u
        gdx = hx[..., 0, 0] + hy[..., 0, 1]
        gdy = hx[..., 0, 1] + hy[..., 1, 1]
        x = geo.x
        fx, fy = fe_fun(x[..., 0], x[..., 1])
        tau, tpi = mat.tau, mat.tau + mat.iota
        rx = tau * lap_x + tpi * gdx - mat.alpha * pg[..., 0] + fx
        ry = tau * lap_y + tpi * gdy - mat.alpha * pg[..., 1] + fy
        div = gx[..., 0] + gy[..., 1]
        rp = (np.einsum("ab,emab->em", kap, ph) - mat.storage * pv - mat.alpha * div
              - ff_fun(x[..., 0], x[..., 1]))
        eta_u[pos] += (h_t[pos] / r) ** 2 * (wq * (rx ** 2 + ry ** 2)).sum(1)
        eta_p[pos] += (h_t[pos] / s) ** 2 * (wq * rp ** 2).sum(1)

    # interior jumps
    jumps = []
    for group, rule, ra, rb in _batched(dofmap, _interior_tasks(mesh, dofmap)):
        ju, jp = _jump_norms(fields, mat, group, rule, ra, rb)
        for t, a, b in zip(group, ju, jp):
            cu = t.length / (2.0 * t.r_e) * a
            cp = t.length / (2.0 * t.s_e) * b
            eta_u[t.pos_a] += cu
            eta_u[t.pos_b] += cu
            eta_p[t.pos_a] += cp
            eta_p[t.pos_b] += cp
            jumps.append((t.key, float(a), float(b)))

    # boundary residuals and contact functional
    lam_edges = {}
    if has_contact:
        lam = np.asarray(lam, dtype=float)
        for key, _, _, idx in constraints.edges:
            lam_edges[key] = lam[idx]
    contact_local = np.zeros(nl)
    terms = {"lambda_mu": 0.0, "zeta": 0.0, "coupling": 0.0}
    pointwise = {k: [] for k in ("x", "lam", "mu", "zeta", "un", "g")}
    g_fun = _as_scalar_fun(g) if g is not None else None
    for group, rule, ra, _ in _batched(dofmap, _boundary_tasks(mesh, dofmap)):
        f = fields.evaluate([t.pos_a for t in group], ra)
        n = np.stack([t.normal for t in group])[:, None, :]
        lengths = np.array([t.length for t in group])
        wq = rule.weights[None, :] * 0.5 * lengths[:, None]
        x = f["x"]
        trac = stress_traction(f["du"], n, mat) - mat.alpha * f["p"][..., None] * n
        fl = np.einsum("tma,ab,tmb->tm", f["dp"], kap, n)
        for j, t in enumerate(group):
            dtag, ptag = t.tags
            xj, nj = x[j], t.normal
            if dtag in (DispTag.TRACTION, DispTag.CONTACT):
                res = trac[j].copy()
                if traction is not None:
                    tx, ty = traction(xj[:, 0], xj[:, 1], nj[0], nj[1])
                    res -= np.column_stack([np.broadcast_to(tx, len(xj)),
                                            np.broadcast_to(ty, len(xj))])
                if dtag == DispTag.CONTACT and t.key in lam_edges:
                    lq = _edge_values(mesh, t.key, lam_edges[t.key], xj)
                    res += lq[:, None] * nj[None, :]
                    un = f["u"][j] @ nj
                    gq = np.broadcast_to(g_fun(xj[:, 0], xj[:, 1]), len(xj)).astype(float)
                    part = _contact_functional(lq, un, gq, t.length, t.r_e, wq[j])
                    for k2, v in part[0].items():
                        terms[k2] += v
                    contact_local[t.pos_a] += sum(part[0].values())
                    for k2, v in zip(("x", "lam", "mu", "zeta", "un", "g"),
                                     (xj, lq, part[1], part[2], un, gq)):
                        pointwise[k2].append(v)
                eta_u[t.pos_a] += t.length / t.r_e * float(wq[j] @ (res ** 2).sum(1))
            if ptag == PressTag.FLUX:
                res = fl[j].copy()
                if flux is not None:
                    res -= flux(xj[:, 0], xj[:, 1], nj[0], nj[1])
                eta_p[t.pos_a] += t.length / t.s_e * float(wq[j] @ res ** 2)
    pointwise = {k: (np.concatenate(v) if v else np.zeros((0, 2) if k == "x" else 0))
                 for k, v in pointwise.items()}
    return EstimatorReport(eta_u, eta_p, terms, contact_local, jumps, pointwise)


def _edge_values(mesh, key, nodal, x):
    """Evaluate a polynomial given by GLL nodal values along edge ``key``."""
    a, b = mesh.points[key[0]], mesh.points[key[1]]
    d = b - a
    t = 2.0 * ((x - a) @ d) / (d @ d) - 1.0
    return interpolation_matrix(len(nodal) - 1, t) @ nodal


def cutoffs(lam, un, g, h, r):
    """Pointwise cut-off functions ``(mu, zeta)`` on a contact edge."""
    mu = np.maximum(0.0, lam - CUTOFF * (r / h) * (g - un))
    zeta = np.maximum(un - g, -CUTOFF * (h / r) * lam)
    return mu, zeta


def _contact_functional(lam, un, g, h, r, wq):
    mu, zeta = cutoffs(lam, un, g, h, r)
    out = {
        "lambda_mu": (h / r) * float(wq @ (lam - mu) ** 2),
        "zeta": (r / h) * float(wq @ zeta ** 2),
        "coupling": COUPLING * (float(wq @ (lam * zeta)) + float(wq @ (mu * (g - un)))),
    }
    return out, mu, zeta
