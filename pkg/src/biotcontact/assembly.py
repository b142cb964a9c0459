"""Sparse matrices and load vectors of the three Biot bilinear forms.

Sign convention of the coupled system (contact-free case)::

    A u - B^T p = fe
   -B u - C p   = ff
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyCorruption, GeometryError, InvalidArgument, SolverError
from .fem import Geometry, basis_tables, volume_rule
from .mesh import SIDES, DispTag, PressTag
from .quadrature import gauss_legendre

CHUNK = 4096


@dataclass(frozen=True)
class MaterialParams:
    tau: float = 1.0
    iota: float = 1.0
    alpha: float = 1.0
    kappa: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=float)
        if k.ndim == 0:
            k = float(k) * np.eye(2)
        object.__setattr__(self, "kappa", k)
        for name in ("tau", "iota", "alpha"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise InvalidArgument(f"{name} must be positive, got {v}")
        if k.shape != (2, 2) or not np.allclose(k, k.T):
            raise InvalidArgument("kappa must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(k).min() <= 0:
            raise InvalidArgument("kappa must be positive definite")

    @property
    def storage(self):
        """Coefficient of the pressure mass term, alpha^2 / iota."""
        return self.alpha ** 2 / self.iota


@dataclass
class SystemBlocks:
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    fe: np.ndarray
    ff: np.ndarray
    G_u: sp.csr_matrix = None
    G_p: sp.csr_matrix = None
    material: MaterialParams = None
    dofmap: object = None
    _lu: dict = field(default_factory=dict, repr=False)

    @property
    def n_u(self):
        return self.A.shape[0]

    @property
    def n_p(self):
        return self.C.shape[0]

    def factor(self, which):
        """Cached sparse LU of ``A`` (``'u'``) or ``C`` (``'p'``)."""
        if which not in self._lu:
            mat = self.A if which == "u" else self.C
            try:
                self._lu[which] = spla.splu(mat.tocsc(), permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise SolverError(str(exc)) from exc
        return self._lu[which]

    def with_loads(self, fe=None, ff=None):
        return SystemBlocks(self.A, self.B, self.C,
                            self.fe if fe is None else np.asarray(fe, dtype=float),
                            self.ff if ff is None else np.asarray(ff, dtype=float),
                            self.G_u, self.G_p, self.material, self.dofmap, self._lu)


def _as_vector_fun(f):
    if callable(f):
        return f
    c = np.asarray(f, dtype=float)
    return lambda x, y: (np.full_like(x, c[0]), np.full_like(x, c[1]))


def _as_scalar_fun(f):
    if callable(f):
        return f
    c = float(f)
    return lambda x, y: np.full_like(x, c)


def _block_diag(local, offsets_rows, offsets_cols=None):
    """Sparse block-diagonal matrix from dense blocks ``(e, n, m)``."""
    e, n, m = local.shape
    r0 = np.arange(e)[:, None, None] * n
    c0 = np.arange(e)[:, None, None] * m
    rows = np.broadcast_to(r0 + np.arange(n)[None, :, None], local.shape)
    cols = np.broadcast_to(c0 + np.arange(m)[None, None, :], local.shape)
    return sp.csr_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(e * n, e * m))


def _groups(dofmap):
    mesh = dofmap.mesh
    leaves = mesh.leaves
    r = mesh.cell_r[leaves]
    s = mesh.cell_s[leaves]
    out = {}
    for k in range(len(leaves)):
        out.setdefault((int(r[k]), int(s[k])), []).append(k)
    for key in sorted(out):
        pos = np.array(out[key])
        for lo in range(0, len(pos), CHUNK):
            yield key, pos[lo:lo + CHUNK]


def assemble(mesh, dofmap, mat, fe_fun=(0.0, 0.0), ff_fun=0.0, traction=None, flux=None,
             gram=True):
    """Assemble A, B, C and the loads on the free unknowns.

    ``fe_fun(x, y) -> (fx, fy)`` and ``ff_fun(x, y)`` may be constants.
    Optional ``traction(x, y, nx, ny) -> (tx, ty)`` is applied on traction and
    contact edges, ``flux(x, y, nx, ny)`` (the value of kappa grad p . n) on
    flux edges; both default to the homogeneous conditions.
    """
    fe_fun = _as_vector_fun(fe_fun)
    ff_fun = _as_scalar_fun(ff_fun)
    us, ps = dofmap.u_space, dofmap.p_space
    nu, npf = us.n_free, ps.n_free
    leaves = mesh.leaves
    tau, iota, alpha = mat.tau, mat.iota, mat.alpha
    kap = mat.kappa

    blocks = {k: sp.csr_matrix((a, b)) for k, a, b in (
        ("xx", nu, nu), ("xy", nu, nu), ("yy", nu, nu), ("bx", npf, nu), ("by", npf, nu),
        ("c", npf, npf), ("gu", nu, nu), ("gp", npf, npf))}
    fx = np.zeros(nu)
    fy = np.zeros(nu)
    fp = np.zeros(npf)

    for (r, s), pos in _groups(dofmap):
        cells = leaves[pos]
        ref, w = volume_rule(max(r, s) + 1)
        geo = Geometry(mesh, cells, ref)
        if np.any(geo.det <= 0):
            raise GeometryError("singular or inverted element map")
        wq = w[None, :] * geo.det
        vu, du = basis_tables(r, ref)
        vp, dp = basis_tables(s, ref)
        gu = geo.grad(du)  # (e, q, n, 2)
        gp = geo.grad(dp)
        gx, gy = gu[..., 0], gu[..., 1]
        XX = np.einsum("eq,eqi,eqj->eij", wq, gx, gx)
        YY = np.einsum("eq,eqi,eqj->eij", wq, gy, gy)
        XY = np.einsum("eq,eqi,eqj->eij", wq, gx, gy)
        Axx = (2 * tau + iota) * XX + tau * YY
        Ayy = tau * XX + (2 * tau + iota) * YY
        Axy = tau * XY.transpose(0, 2, 1) + iota * XY
        Bx = alpha * np.einsum("eq,qi,eqj->eij", wq, vp, gx)
        By = alpha * np.einsum("eq,qi,eqj->eij", wq, vp, gy)
        Mp = np.einsum("eq,qi,qj->eij", wq, vp, vp)
        Kp = np.einsum("eq,eqia,ab,eqjb->eij", wq, gp, kap, gp)
        Cl = mat.storage * Mp + Kp
        Pu = us.local_block(pos)
        Pp = ps.local_block(pos)
        PuT, PpT = Pu.T.tocsr(), Pp.T.tocsr()
        blocks["xx"] = blocks["xx"] + PuT @ _block_diag(Axx, None) @ Pu
        blocks["yy"] = blocks["yy"] + PuT @ _block_diag(Ayy, None) @ Pu
        blocks["xy"] = blocks["xy"] + PuT @ _block_diag(Axy, None) @ Pu
        blocks["bx"] = blocks["bx"] + PpT @ _block_diag(Bx, None) @ Pu
        blocks["by"] = blocks["by"] + PpT @ _block_diag(By, None) @ Pu
        blocks["c"] = blocks["c"] + PpT @ _block_diag(Cl, None) @ Pp
        if gram:
            Mu = np.einsum("eq,qi,qj->eij", wq, vu, vu)
            blocks["gu"] = blocks["gu"] + PuT @ _block_diag(Mu + XX + YY, None) @ Pu
            Kp1 = np.einsum("eq,eqia,eqja->eij", wq, gp, gp)
            blocks["gp"] = blocks["gp"] + PpT @ _block_diag(Mp + Kp1, None) @ Pp
        xq = geo.x
        ex, ey = fe_fun(xq[..., 0], xq[..., 1])
        ex = np.broadcast_to(ex, wq.shape)
        ey = np.broadcast_to(ey, wq.shape)
        fq = np.broadcast_to(ff_fun(xq[..., 0], xq[..., 1]), wq.shape)
        fx += PuT @ np.einsum("eq,eq,qi->ei", wq, ex, vu).ravel()
        fy += PuT @ np.einsum("eq,eq,qi->ei", wq, ey, vu).ravel()
        fp += PpT @ np.einsum("eq,eq,qi->ei", wq, fq, vp).ravel()

    if traction is not None or flux is not None:
        bx, by, bp = _boundary_loads(mesh, dofmap, traction, flux)
        fx += bx
        fy += by
        fp -= bp

    A = sp.bmat([[blocks["xx"], blocks["xy"]], [blocks["xy"].T, blocks["yy"]]], format="csr")
    A = _symmetrize(A)
    C = _symmetrize(blocks["c"])
    B = sp.hstack([blocks["bx"], blocks["by"]], format="csr")
    G_u = G_p = None
    if gram:
        g = _symmetrize(blocks["gu"])
        G_u = sp.block_diag([g, g], format="csr")
        G_p = _symmetrize(blocks["gp"])
    return SystemBlocks(A, B, C, np.concatenate([fx, fy]), fp, G_u, G_p, mat, dofmap)


def _symmetrize(M):
    M = M.tocsr()
    out = ((M + M.T) * 0.5).tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def boundary_sides(mesh, dofmap, predicate):
    """Boundary leaf sides whose tag pair satisfies ``predicate``.

    Yields ``(leaf position, cell, side index, outward normal, length)``.
    """
    topo = mesh.topology
    us = dofmap.u_space
    for c in mesh.leaves.tolist():
        for info in topo.sides[c]:
            if info.kind != "boundary" or not predicate(mesh.edge_tags[info.key]):
                continue
            v = mesh.cell_vertices[c]
            i, j = SIDES[info.side]
            a, b = mesh.points[v[i]], mesh.points[v[j]]
            t = b - a
            length = float(np.linalg.norm(t))
            n = np.array([t[1], -t[0]]) / length
            if np.dot(n, 0.5 * (a + b) - mesh.points[v].mean(axis=0)) < 0:
                n = -n
            yield us.leaf_index[c], c, info.side, n, length


def side_reference_points(side, t):
    """Reference coordinates of side parameter values ``t``."""
    ref = np.empty((len(t), 2))
    if side in (0, 2):
        ref[:, 0] = t
        ref[:, 1] = -1.0 if side == 0 else 1.0
    else:
        ref[:, 1] = t
        ref[:, 0] = 1.0 if side == 1 else -1.0
    return ref


def _boundary_loads(mesh, dofmap, traction, flux):
    us, ps = dofmap.u_space, dofmap.p_space
    bx = np.zeros(us.offsets[-1])
    by = np.zeros(us.offsets[-1])
    bp = np.zeros(ps.offsets[-1])
    if traction is not None:
        pred = lambda tag: tag[0] in (DispTag.TRACTION, DispTag.CONTACT)
        for k, c, side, n, length in boundary_sides(mesh, dofmap, pred):
            r = int(us.degrees[k])
            rule = gauss_legendre(r + 2)
            ref = side_reference_points(side, rule.points)
            x = mesh.map_points([c], ref)[0]
            v, _ = basis_tables(r, ref)
            tx, ty = traction(x[:, 0], x[:, 1], n[0], n[1])
            wq = rule.weights * 0.5 * length
            lo = us.offsets[k]
            bx[lo:lo + v.shape[1]] += v.T @ (wq * tx)
            by[lo:lo + v.shape[1]] += v.T @ (wq * ty)
    if flux is not None:
        pred = lambda tag: tag[1] == PressTag.FLUX
        for k, c, side, n, length in boundary_sides(mesh, dofmap, pred):
            s = int(ps.degrees[k])
            rule = gauss_legendre(s + 2)
            ref = side_reference_points(side, rule.points)
            x = mesh.map_points([c], ref)[0]
            v, _ = basis_tables(s, ref)
            q = flux(x[:, 0], x[:, 1], n[0], n[1])
            lo = ps.offsets[k]
            bp[lo:lo + v.shape[1]] += v.T @ (rule.weights * 0.5 * length * q)
    return us.prolongation.T @ bx, us.prolongation.T @ by, ps.prolongation.T @ bp


def energy_norms(blocks, u, p):
    """Energy norms sqrt(u^T A u) and sqrt(p^T C p)."""
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    if u.shape != (blocks.n_u,) or p.shape != (blocks.n_p,):
        raise InvalidArgument("vector lengths do not match the system")
    qa = float(u @ (blocks.A @ u))
    qc = float(p @ (blocks.C @ p))
    for q in (qa, qc):
        if q < -1e-12:
            raise AssemblyCorruption(f"negative quadratic form {q}")
    return np.sqrt(max(qa, 0.0)), np.sqrt(max(qc, 0.0))


def dual_norm(blocks, which, f):
    """Discrete dual norm sqrt(f^T A^{-1} f) (``'u'``) or with C (``'p'``)."""
    if which not in ("u", "p"):
        raise InvalidArgument("which must be 'u' or 'p'")
    f = np.asarray(f, dtype=float)
    n = blocks.n_u if which == "u" else blocks.n_p
    if f.shape != (n,):
        raise InvalidArgument("vector length does not match the system")
    if not f.any():
        return 0.0
    z = blocks.factor(which).solve(f)
    if not np.all(np.isfinite(z)):
        raise SolverError("dual norm solve failed")
    return float(np.sqrt(max(f @ z, 0.0)))
