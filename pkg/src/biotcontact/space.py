"""Degree-of-freedom management for the displacement and pressure spaces.

Every leaf carries a tensor Lagrange basis on Gauss-Lobatto nodes. Globally
we first number "raw" unknowns (one per vertex, ``d_e - 1`` per edge of edge
degree ``d_e``, and the cell interiors), express each local nodal value as a
combination of raw unknowns by interpolating the edge polynomial, and finally
eliminate raw unknowns fixed by hanging edges or Dirichlet conditions.

Edge degrees follow the minimum rule. On a hanging edge the master edge and
both halves use the minimum over the three adjacent cells, so the halves can
reproduce the restricted master polynomial exactly.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument, InvalidGap
from .mesh import SIDES, DispTag, PressTag, audit, edge_key
from .quadrature import interpolation_matrix, shape_basis

_DROP = 1e-13


def local_nodes(p):
    """Reference coordinates of the tensor GLL nodes, x index fastest."""
    t = shape_basis(p).nodes
    xx, yy = np.meshgrid(t, t, indexing="xy")
    return np.column_stack([xx.ravel(), yy.ravel()])


def side_node_indices(p):
    """Local node indices along each side, ordered by the side parameter."""
    n = p + 1
    i = np.arange(n)
    return (i,                      # y = -1, x increasing
            i * n + (n - 1),        # x = +1, y increasing
            (n - 1) * n + i,        # y = +1, x increasing
            i * n)                  # x = -1, y increasing


class ScalarSpace:
    """Continuous piecewise polynomial space on the leaves of a mesh.

    Parameters
    ----------
    mesh : Mesh
    degrees : array of int, one per leaf (aligned with ``mesh.leaves``)
    dirichlet : callable taking a boundary tag pair and returning True when
        the edge carries a homogeneous Dirichlet condition.
    """

    def __init__(self, mesh, degrees, dirichlet):
        self.mesh = mesh
        self.degrees = np.asarray(degrees, dtype=np.int64)
        if len(self.degrees) != mesh.n_leaves:
            raise InvalidArgument("one degree per leaf required")
        self._dirichlet = dirichlet
        self._build()

    # ------------------------------------------------------------------ build
    def _build(self):
        mesh = self.mesh
        topo = mesh.topology
        leaves = mesh.leaves.tolist()
        deg_of = dict(zip(leaves, self.degrees.tolist()))
        self.leaf_index = {c: k for k, c in enumerate(leaves)}

        edge_deg = {}
        for c in leaves:
            for info in topo.sides[c]:
                if info.kind == "boundary":
                    edge_deg[info.key] = deg_of[c]
                elif info.kind == "conforming":
                    edge_deg[info.key] = min(deg_of[c], deg_of[info.neighbors[0]])
                elif info.kind == "master":
                    d = min(deg_of[c], deg_of[info.neighbors[0]], deg_of[info.neighbors[1]])
                    m = mesh.midpoints[info.key]
                    edge_deg[info.key] = d
                    edge_deg[edge_key(info.key[0], m)] = d
                    edge_deg[edge_key(m, info.key[1])] = d
                elif info.kind == "irregular":
                    raise InvalidArgument("mesh is not 1-irregular")
        self.edge_degree = edge_deg

        # raw numbering: vertices, then edge interiors, then cell interiors
        verts = np.unique(mesh.cell_vertices[mesh.leaves])
        vraw = {int(v): k for k, v in enumerate(verts.tolist())}
        nraw = len(vraw)
        eraw = {}
        for key in sorted(edge_deg):
            d = edge_deg[key]
            eraw[key] = nraw
            nraw += d - 1
        iraw = np.empty(len(leaves), dtype=np.int64)
        for k, c in enumerate(leaves):
            iraw[k] = nraw
            nraw += (deg_of[c] - 1) ** 2
        self.n_raw = nraw
        self.vertex_raw = vraw
        self.edge_raw = eraw

        def edge_dofs(key):
            d = edge_deg[key]
            return [vraw[key[0]]] + list(range(eraw[key], eraw[key] + d - 1)) + [vraw[key[1]]]

        self._edge_dofs = edge_dofs

        # constraints on raw unknowns: raw -> list of (raw, coef)
        cons = {}
        for c in leaves:
            for info in topo.sides[c]:
                if info.kind == "master":
                    key = info.key
                    d = edge_deg[key]
                    mdofs = edge_dofs(key)
                    m = mesh.midpoints[key]
                    # master parameter of the three points a, m, b
                    tpos = {key[0]: -1.0, m: 0.0, key[1]: 1.0}
                    row = interpolation_matrix(d, np.array([0.0]))[0]
                    cons[vraw[m]] = _pairs(mdofs, row)
                    for sub in (edge_key(key[0], m), edge_key(m, key[1])):
                        if d < 2:
                            continue
                        tloc = shape_basis(d).nodes[1:-1]
                        t0, t1 = tpos[sub[0]], tpos[sub[1]]
                        tau = t0 + 0.5 * (tloc + 1.0) * (t1 - t0)
                        rows = interpolation_matrix(d, tau)
                        for k, raw in enumerate(range(eraw[sub], eraw[sub] + d - 1)):
                            cons[raw] = _pairs(mdofs, rows[k])
                elif info.kind == "boundary":
                    tag = mesh.edge_tags[info.key]
                    if self._dirichlet(tag):
                        for raw in edge_dofs(info.key):
                            cons[raw] = []

        resolved = {}

        def resolve(raw, depth=0):
            if raw in resolved:
                return resolved[raw]
            if depth > 64:
                raise InvalidArgument("cyclic hanging-node constraints")
            out = {}
            for r2, cf in cons[raw]:
                if r2 in cons:
                    for r3, c3 in resolve(r2, depth + 1):
                        out[r3] = out.get(r3, 0.0) + cf * c3
                else:
                    out[r2] = out.get(r2, 0.0) + cf
            res = [(r, v) for r, v in sorted(out.items()) if abs(v) > _DROP]
            resolved[raw] = res
            return res

        for raw in cons:
            resolve(raw)

        is_free = np.ones(nraw, dtype=bool)
        is_free[list(cons)] = False
        raw_to_free = np.full(nraw, -1, dtype=np.int64)
        raw_to_free[is_free] = np.arange(int(is_free.sum()))
        self.raw_to_free = raw_to_free
        self.n_free = int(is_free.sum())
        self.constraints = {raw: [(int(raw_to_free[r]), v) for r, v in res]
                            for raw, res in resolved.items()}

        # local node -> raw expansion, assembled as COO triplets
        rows, cols, vals = [], [], []
        offsets = np.zeros(len(leaves) + 1, dtype=np.int64)
        for k, c in enumerate(leaves):
            p = deg_of[c]
            offsets[k + 1] = offsets[k] + (p + 1) ** 2
        self.offsets = offsets
        verts_of = mesh.cell_vertices
        interp_cache = {}
        for k, c in enumerate(leaves):
            p = deg_of[c]
            n = p + 1
            base = offsets[k]
            v = verts_of[c]
            for loc, corner in zip((0, n - 1, n * n - 1, (n - 1) * n), range(4)):
                rows.append(base + loc)
                cols.append(vraw[int(v[corner])])
                vals.append(1.0)
            if p > 1:
                sides = side_node_indices(p)
                for s, (i, j) in enumerate(SIDES):
                    a, b = int(v[i]), int(v[j])
                    key = edge_key(a, b)
                    d = edge_deg[key]
                    flip = a > b
                    ck = (p, d, flip)
                    mat = interp_cache.get(ck)
                    if mat is None:
                        t = shape_basis(p).nodes[1:-1]
                        mat = interpolation_matrix(d, -t if flip else t)
                        mat[np.abs(mat) < _DROP] = 0.0
                        mat[np.abs(mat - 1.0) < _DROP] = 1.0
                        interp_cache[ck] = mat
                    edofs = edge_dofs(key)
                    nz_r, nz_c = np.nonzero(mat)
                    rows.extend((base + sides[s][1:-1][nz_r]).tolist())
                    cols.extend(np.asarray(edofs)[nz_c].tolist())
                    vals.extend(mat[nz_r, nz_c].tolist())
                ii, jj = np.meshgrid(np.arange(1, p), np.arange(1, p), indexing="xy")
                loc = (jj * n + ii).ravel()
                rows.extend((base + loc).tolist())
                cols.extend(range(iraw[k], iraw[k] + (p - 1) ** 2))
                vals.extend([1.0] * ((p - 1) ** 2))
        local_to_raw = sp.csr_matrix((vals, (rows, cols)), shape=(offsets[-1], nraw))
        self.local_to_raw = local_to_raw
        self.raw_to_free_matrix = self._raw_to_free_matrix()
        # P maps free coefficients to stacked local nodal values
        self.prolongation = (local_to_raw @ self.raw_to_free_matrix).tocsr()
        self.prolongation.eliminate_zeros()

    def _raw_to_free_matrix(self):
        rows, cols, vals = [], [], []
        free = np.flatnonzero(self.raw_to_free >= 0)
        rows.extend(free.tolist())
        cols.extend(self.raw_to_free[free].tolist())
        vals.extend([1.0] * len(free))
        for raw, pairs in self.constraints.items():
            for f, v in pairs:
                rows.append(raw)
                cols.append(f)
                vals.append(v)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_raw, self.n_free))

    # --------------------------------------------------------------- queries
    def local_values(self, coeffs):
        """Stacked local nodal values for a free coefficient vector."""
        return self.prolongation @ coeffs

    def cell_values(self, coeffs, k):
        """Nodal values on leaf number ``k`` (position in ``mesh.leaves``)."""
        lo, hi = self.offsets[k], self.offsets[k + 1]
        return self.prolongation[lo:hi] @ coeffs

    def groups(self):
        """Leaf positions grouped by degree: ``{p: array of positions}``."""
        out = {}
        for p in np.unique(self.degrees):
            out[int(p)] = np.flatnonzero(self.degrees == p)
        return out

    def local_block(self, positions):
        """Rows of the prolongation for the given leaf positions, each of the
        same degree, as a ``(len(positions) * n_loc) x n_free`` matrix."""
        idx = np.concatenate([np.arange(self.offsets[k], self.offsets[k + 1])
                              for k in positions])
        return self.prolongation[idx]

    @property
    def n_constrained(self):
        return self.n_raw - self.n_free

    def edge_dofs(self, key):
        return self._edge_dofs(key)

    def free_expansion(self, raw):
        """Free unknowns and coefficients representing one raw unknown."""
        f = self.raw_to_free[raw]
        if f >= 0:
            return [(int(f), 1.0)]
        return list(self.constraints[raw])


def _pairs(dofs, row):
    return [(d, float(v)) for d, v in zip(dofs, row) if abs(v) > _DROP]


# ------------------------------------------------------------------ dof map
@dataclass
class DofMap:
    """Displacement (two components) and pressure spaces on one mesh.

    Displacement unknowns are ordered ``[u_x free..., u_y free...]``.
    """

    mesh: object
    u_space: ScalarSpace
    p_space: ScalarSpace

    @property
    def n_u(self):
        return 2 * self.u_space.n_free

    @property
    def n_p(self):
        return self.p_space.n_free

    @property
    def n_total(self):
        return self.n_u + self.n_p

    def split_u(self, u):
        n = self.u_space.n_free
        return u[:n], u[n:]


def build_dof_map(mesh, check=True):
    if check:
        problems = audit(mesh)
        if problems:
            raise InvalidArgument("mesh audit failed: " + "; ".join(problems))
    leaves = mesh.leaves
    u_space = ScalarSpace(mesh, mesh.cell_r[leaves], lambda t: t[0] == DispTag.DIRICHLET)
    p_space = ScalarSpace(mesh, mesh.cell_s[leaves], lambda t: t[1] == PressTag.PRESSURE)
    return DofMap(mesh, u_space, p_space)


# ------------------------------------------------------------ contact set
@dataclass
class ContactConstraintSet:
    """Pointwise non-penetration constraints ``rows @ u <= bounds``.

    One constraint per Gauss-Lobatto point of each contact edge; points
    shared by two edges with the same normal are merged. ``dof`` and
    ``coef`` describe the bound form ``coef * u[dof] <= bound`` when every
    row has a single entry (``dof`` is -1 otherwise).
    """

    rows: sp.csr_matrix
    points: np.ndarray
    normals: np.ndarray
    bounds: np.ndarray
    raw: np.ndarray
    edges: list  # (edge key, cell, normal, constraint indices in edge order)
    dof: np.ndarray
    coef: np.ndarray

    def __len__(self):
        return len(self.bounds)

    @property
    def is_bound_form(self):
        return len(self.dof) == 0 or bool(np.all(self.dof >= 0))

    def normal_values(self, u):
        return self.rows @ u

    def gap(self, u):
        return self.bounds - self.rows @ u

    def with_bounds(self, bounds):
        bounds = np.asarray(bounds, dtype=float)
        return ContactConstraintSet(self.rows, self.points, self.normals, bounds, self.raw,
                                    self.edges, self.dof, self.coef)


def contact_edges(mesh):
    """Leaf sides on the contact boundary: list of (key, cell, side, normal)."""
    out = []
    topo = mesh.topology
    for c in mesh.leaves.tolist():
        for info in topo.sides[c]:
            if info.kind == "boundary" and mesh.edge_tags[info.key][0] == DispTag.CONTACT:
                v = mesh.cell_vertices[c]
                i, j = SIDES[info.side]
                a, b = mesh.points[v[i]], mesh.points[v[j]]
                t = b - a
                n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
                if np.dot(n, 0.5 * (a + b) - mesh.points[v].mean(axis=0)) < 0:
                    n = -n
                out.append((info.key, c, info.side, n))
    return out


def contact_constraints(mesh, dofmap, g):
    """Constraint set ``u.n <= g`` at the GLL points of every contact edge."""
    space = dofmap.u_space
    nf = space.n_free
    entries = {}
    order = []
    edges = []
    for key, c, side, n in contact_edges(mesh):
        d = space.edge_degree[key]
        t = shape_basis(d).nodes
        a, b = mesh.points[key[0]], mesh.points[key[1]]
        pts = a + 0.5 * (t[:, None] + 1.0) * (b - a)
        idx = []
        for raw, x in zip(space.edge_dofs(key), pts):
            nk = (raw, round(float(n[0]), 12), round(float(n[1]), 12))
            if nk not in entries:
                entries[nk] = len(order)
                order.append((raw, x, n))
            idx.append(entries[nk])
        edges.append((key, c, n, np.array(idx)))
    m = len(order)
    if m == 0:
        return ContactConstraintSet(sp.csr_matrix((0, 2 * nf)), np.zeros((0, 2)),
                                    np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=np.int64),
                                    [], np.zeros(0, dtype=np.int64), np.zeros(0))
    pts = np.array([o[1] for o in order])
    normals = np.array([o[2] for o in order])
    bounds = np.asarray(g(pts[:, 0], pts[:, 1]), dtype=float) * np.ones(m)
    if not np.all(np.isfinite(bounds)):
        raise InvalidGap("gap function is not finite at every contact point")
    rows, cols, vals = [], [], []
    for i, (raw, _, n) in enumerate(order):
        for f, cf in space.free_expansion(raw):
            for comp in (0, 1):
                if abs(n[comp]) > 1e-14:
                    rows.append(i)
                    cols.append(f + comp * nf)
                    vals.append(cf * n[comp])
    G = sp.csr_matrix((vals, (rows, cols)), shape=(m, 2 * nf))
    G.sum_duplicates()
    G.eliminate_zeros()
    nnz = np.diff(G.indptr)
    if np.all(nnz == 1):
        dof = G.indices.copy()
        coef = G.data.copy()
    else:
        dof = np.full(m, -1, dtype=np.int64)
        coef = np.zeros(m)
    raw = np.array([o[0] for o in order], dtype=np.int64)
    return ContactConstraintSet(G, pts, normals, bounds, raw, edges, dof, coef)
