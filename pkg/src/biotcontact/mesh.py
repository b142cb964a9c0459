"""1-irregular quadrilateral meshes with a refinement tree and hp degrees.

Cells are never deleted: refinement appends four children and links them to
the parent, so a finer snapshot contains every cell of the coarser one at the
same index. Only leaves carry the discretization.

Local vertex order is counter-clockwise starting at the image of (-1, -1).
Side ``k`` runs between local vertices ``SIDES[k]`` with the reference
parameter increasing from the first to the second vertex.
"""
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import GeometryError, InvalidArgument, UnsupportedDegree
from .quadrature import MAX_DEGREE


class DispTag(str, Enum):
    DIRICHLET = "dirichlet"
    TRACTION = "traction"
    CONTACT = "contact"


class PressTag(str, Enum):
    PRESSURE = "pressure"
    FLUX = "flux"


# local vertex pairs for each side, parameter running first -> second
SIDES = ((0, 1), (1, 2), (3, 2), (0, 3))
# (fixed reference coordinate axis, fixed value) for each side
SIDE_FIXED = ((1, -1.0), (0, 1.0), (1, 1.0), (0, -1.0))
# offsets of the four children inside the parent reference square
CHILD_SHIFT = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def edge_key(a, b):
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class SideInfo:
    """Classification of one leaf side.

    kind is 'boundary', 'conforming', 'master' (coarse side of a hanging edge)
    or 'slave' (fine side of a hanging edge).
    """

    cell: int
    side: int
    key: tuple
    kind: str
    neighbors: tuple = ()
    master_key: tuple = None


class Mesh:
    """Immutable snapshot of a refined quadrilateral mesh.

    Attributes are numpy arrays over all cells of the refinement tree;
    ``leaves`` lists the active ones in increasing id order.
    """

    def __init__(self, points, cell_vertices, cell_level, cell_parent, cell_children,
                 cell_child_index, cell_r, cell_s, midpoints, edge_parent, edge_tags):
        self.points = points
        self.cell_vertices = cell_vertices
        self.cell_level = cell_level
        self.cell_parent = cell_parent
        self.cell_children = cell_children
        self.cell_child_index = cell_child_index
        self.cell_r = cell_r
        self.cell_s = cell_s
        self.midpoints = midpoints
        self.edge_parent = edge_parent
        self.edge_tags = edge_tags
        for a in (points, cell_vertices, cell_level, cell_parent, cell_children,
                  cell_child_index, cell_r, cell_s):
            a.flags.writeable = False

    # ------------------------------------------------------------------ basics
    @property
    def n_cells(self):
        return len(self.cell_level)

    @cached_property
    def leaves(self):
        out = np.flatnonzero(self.cell_children[:, 0] < 0)
        out.flags.writeable = False
        return out

    @property
    def n_leaves(self):
        return len(self.leaves)

    def is_leaf(self, cell):
        return self.cell_children[cell, 0] < 0

    def corners(self, cells=None):
        """Vertex coordinates, shape ``(n, 4, 2)``."""
        cells = self.leaves if cells is None else cells
        return self.points[self.cell_vertices[cells]]

    def diameters(self, cells=None):
        c = self.corners(cells)
        d1 = np.linalg.norm(c[:, 2] - c[:, 0], axis=1)
        d2 = np.linalg.norm(c[:, 3] - c[:, 1], axis=1)
        return np.maximum(d1, d2)

    def side_tags(self, key):
        return self.edge_tags.get(key)

    # ---------------------------------------------------------------- geometry
    def map_points(self, cells, ref):
        """Physical images of reference points ``ref`` (m, 2) for each cell."""
        c = self.corners(cells)
        n = _bilinear_shape(ref)  # (m, 4)
        return np.einsum("mk,ekd->emd", n, c)

    def jacobians(self, cells, ref):
        """Jacobian matrices ``J[e, m] = d x / d xi`` at reference points."""
        c = self.corners(cells)
        dn = _bilinear_grad(ref)  # (m, 4, 2)
        return np.einsum("mkj,eki->emij", dn, c)

    def locate(self, x):
        """Leaf containing each physical point and its reference coordinates.

        Uses a tree descent from the roots, so it is exact for nested meshes.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        roots = np.flatnonzero(self.cell_parent < 0)
        cell = np.full(len(x), -1)
        ref = np.zeros_like(x)
        rc = self.corners(roots)
        lo, hi = rc.min(axis=1) - 1e-10, rc.max(axis=1) + 1e-10
        for r, a, b in zip(roots, lo, hi):
            cand = np.flatnonzero((cell < 0) & np.all((x >= a) & (x <= b), axis=1))
            if cand.size == 0:
                continue
            xi, inside = self._inverse_map(r, x[cand])
            cell[cand[inside]] = r
            ref[cand[inside]] = xi[inside]
        if np.any(cell < 0):
            raise InvalidArgument("point outside the mesh")
        while True:
            inner = self.cell_children[cell, 0] >= 0
            if not inner.any():
                break
            idx = np.flatnonzero(inner)
            xi = ref[idx]
            qx = (xi[:, 0] >= 0).astype(int)
            qy = (xi[:, 1] >= 0).astype(int)
            k = np.array([[0, 1], [3, 2]])[qy, qx]
            cell[idx] = self.cell_children[cell[idx], k]
            ref[idx] = 2.0 * xi - CHILD_SHIFT[k]
        return cell, np.clip(ref, -1.0, 1.0)

    def _inverse_map(self, cell, x, tol=1e-10):
        c = self.corners([cell])[0]
        xi = np.zeros_like(x)
        for _ in range(50):
            f = _bilinear_shape(xi) @ c - x
            jac = np.einsum("mkj,ki->mij", _bilinear_grad(xi), c)
            step = np.linalg.solve(jac, f[..., None])[..., 0]
            xi = xi - step
            if np.max(np.abs(step), initial=0.0) < 1e-14:
                break
        inside = np.all(np.abs(xi) <= 1.0 + tol, axis=1)
        return xi, inside

    # ---------------------------------------------------------------- topology
    @cached_property
    def topology(self):
        return _Topology(self)

    def neighbors(self, cell):
        nb = set()
        for info in self.topology.sides[cell]:
            nb.update(info.neighbors)
        return sorted(nb)

    # ------------------------------------------------------------------ export
    def ancestor_in(self, coarse):
        """For each leaf of ``self``, its ancestor leaf in ``coarse`` and the
        affine map ``xi_coarse = scale * xi + shift`` between reference squares.
        """
        if coarse.n_cells > self.n_cells or not np.array_equal(
                coarse.cell_vertices, self.cell_vertices[:coarse.n_cells]):
            raise InvalidArgument("meshes are not nested")
        is_coarse_leaf = np.zeros(self.n_cells, dtype=bool)
        is_coarse_leaf[coarse.leaves] = True
        cells = self.leaves.copy()
        scale = np.ones(len(cells))
        shift = np.zeros((len(cells), 2))
        todo = ~is_coarse_leaf[cells]
        while todo.any():
            idx = np.flatnonzero(todo)
            k = self.cell_child_index[cells[idx]]
            # xi_parent = (xi_child + s_k) / 2 composed with current map
            shift[idx] = (shift[idx] + CHILD_SHIFT[k]) / 2.0
            scale[idx] = scale[idx] / 2.0
            cells[idx] = self.cell_parent[cells[idx]]
            if np.any(cells[idx] < 0):
                raise InvalidArgument("meshes are not nested")
            todo = ~is_coarse_leaf[cells]
        return cells, scale, shift

    def __repr__(self):
        return (f"Mesh(leaves={self.n_leaves}, vertices={len(self.points)}, "
                f"max_level={int(self.cell_level[self.leaves].max())}, "
                f"r={sorted(set(self.cell_r[self.leaves].tolist()))})")


def _bilinear_shape(ref):
    x, y = ref[:, 0], ref[:, 1]
    return 0.25 * np.column_stack([(1 - x) * (1 - y), (1 + x) * (1 - y),
                                   (1 + x) * (1 + y), (1 - x) * (1 + y)])


def _bilinear_grad(ref):
    x, y = ref[:, 0], ref[:, 1]
    dx = 0.25 * np.column_stack([-(1 - y), (1 - y), (1 + y), -(1 + y)])
    dy = 0.25 * np.column_stack([-(1 - x), -(1 + x), (1 + x), (1 - x)])
    return np.stack([dx, dy], axis=-1)


class _Topology:
    """Side classification of all leaves; built once per snapshot."""

    def __init__(self, mesh):
        owners = {}
        leaves = mesh.leaves
        verts = mesh.cell_vertices
        for c in leaves.tolist():
            v = verts[c]
            for s, (i, j) in enumerate(SIDES):
                owners.setdefault(edge_key(int(v[i]), int(v[j])), []).append((c, s))
        self.owners = owners
        sides = {}
        irregular = []
        for c in leaves.tolist():
            v = verts[c]
            infos = []
            for s, (i, j) in enumerate(SIDES):
                key = edge_key(int(v[i]), int(v[j]))
                own = owners[key]
                if len(own) == 2:
                    other = own[0][0] if own[1][0] == c else own[1][0]
                    infos.append(SideInfo(c, s, key, "conforming", (other,)))
                elif key in mesh.edge_tags:
                    infos.append(SideInfo(c, s, key, "boundary"))
                else:
                    m = mesh.midpoints.get(key)
                    subs = None
                    if m is not None:
                        subs = (edge_key(key[0], m), edge_key(m, key[1]))
                    if subs is not None and subs[0] in owners and subs[1] in owners \
                            and len(owners[subs[0]]) == 1 and len(owners[subs[1]]) == 1:
                        nb = (owners[subs[0]][0][0], owners[subs[1]][0][0])
                        infos.append(SideInfo(c, s, key, "master", nb))
                    else:
                        parent = mesh.edge_parent.get(key)
                        if parent is not None and parent in owners and len(owners[parent]) == 1:
                            infos.append(SideInfo(c, s, key, "slave", (owners[parent][0][0],),
                                                  master_key=parent))
                        else:
                            infos.append(SideInfo(c, s, key, "irregular"))
                            irregular.append((c, s))
            sides[c] = tuple(infos)
        self.sides = sides
        self.irregular = irregular

    def hanging_vertices(self, mesh):
        out = set()
        for infos in self.sides.values():
            for info in infos:
                if info.kind == "master":
                    out.add(mesh.midpoints[info.key])
        return sorted(out)


# --------------------------------------------------------------------- builders
def from_quads(points, quads, tagger, degree=1, pressure_degree=None):
    """Mesh from vertex coordinates and counter-clockwise quads.

    ``tagger(midpoint, normal)`` returns ``(DispTag, PressTag)`` for each
    boundary edge.
    """
    points = np.asarray(points, dtype=float)
    quads = np.asarray(quads, dtype=np.int64)
    if quads.ndim != 2 or quads.shape[1] != 4:
        raise InvalidArgument("quads must have shape (n, 4)")
    _check_degree(degree)
    s_deg = degree if pressure_degree is None else pressure_degree
    _check_degree(s_deg)
    count = {}
    for q in quads.tolist():
        for i, j in SIDES:
            k = edge_key(q[i], q[j])
            count[k] = count.get(k, 0) + 1
    tags = {}
    for q in quads.tolist():
        centre = points[q].mean(axis=0)
        for i, j in SIDES:
            k = edge_key(q[i], q[j])
            if count[k] == 1:
                a, b = points[q[i]], points[q[j]]
                t = b - a
                n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
                if np.dot(n, 0.5 * (a + b) - centre) < 0:
                    n = -n
                ut, pt = tagger(0.5 * (a + b), n)
                tags[k] = (DispTag(ut), PressTag(pt))
    nc = len(quads)
    mesh = Mesh(points, quads.copy(), np.zeros(nc, dtype=np.int64),
                np.full(nc, -1, dtype=np.int64), np.full((nc, 4), -1, dtype=np.int64),
                np.full(nc, -1, dtype=np.int64), np.full(nc, degree, dtype=np.int64),
                np.full(nc, s_deg, dtype=np.int64), {}, {}, tags)
    _check_geometry(mesh)
    return mesh


def contact_square_tagger(mid, normal):
    """Boundary tagging of the unit-square contact benchmark."""
    if normal[1] > 0.5:
        return DispTag.DIRICHLET, PressTag.PRESSURE
    if normal[1] < -0.5:
        return DispTag.CONTACT, PressTag.FLUX
    return DispTag.TRACTION, PressTag.FLUX


def unit_square_mesh(m, degree=1, pressure_degree=None, tagger=contact_square_tagger):
    """Uniform ``m x m`` mesh of the unit square.

    Default tags: top Dirichlet/pressure, bottom contact/flux, sides
    traction/flux.
    """
    if int(m) != m or m < 1:
        raise InvalidArgument(f"need at least one subdivision, got {m}")
    m = int(m)
    t = np.linspace(0.0, 1.0, m + 1)
    xx, yy = np.meshgrid(t, t, indexing="xy")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    ids = np.arange((m + 1) ** 2).reshape(m + 1, m + 1)
    quads = np.column_stack([ids[:-1, :-1].ravel(), ids[:-1, 1:].ravel(),
                             ids[1:, 1:].ravel(), ids[1:, :-1].ravel()])
    return from_quads(pts, quads, tagger, degree, pressure_degree)


def _check_degree(r):
    if int(r) != r or r < 1:
        raise InvalidArgument(f"polynomial degree must be >= 1, got {r}")
    if r > MAX_DEGREE:
        raise UnsupportedDegree(f"degree {r} exceeds the maximum {MAX_DEGREE}")


def _check_geometry(mesh, cells=None):
    cells = mesh.leaves if cells is None else cells
    corners_ref = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    # det J of a bilinear map is affine in each variable, so corners suffice
    det = np.linalg.det(mesh.jacobians(cells, corners_ref))
    if np.any(det <= 0):
        raise GeometryError("element map not orientation preserving")


# ------------------------------------------------------------------ refinement
def refine(mesh, marked):
    """Quarter the marked leaves plus whatever keeps the mesh 1-irregular."""
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size == 0:
        raise InvalidArgument("nothing marked for refinement")
    if marked.min() < 0 or marked.max() >= mesh.n_cells:
        raise InvalidArgument("invalid element id")
    if np.any(mesh.cell_children[marked, 0] >= 0):
        raise InvalidArgument("only leaves can be refined")
    topo = mesh.topology
    todo = set(marked.tolist())
    work = list(todo)
    while work:
        c = work.pop()
        for info in topo.sides[c]:
            if info.kind == "slave":
                coarse = info.neighbors[0]
                if coarse not in todo:
                    todo.add(coarse)
                    work.append(coarse)
    return _quarter(mesh, sorted(todo))


def _quarter(mesh, cells):
    points = [mesh.points]
    npts = len(mesh.points)
    midpoints = dict(mesh.midpoints)
    edge_parent = dict(mesh.edge_parent)
    tags = dict(mesh.edge_tags)
    new_pts = []

    def midpoint(a, b):
        nonlocal npts
        k = edge_key(a, b)
        m = midpoints.get(k)
        if m is None:
            m = npts
            npts += 1
            new_pts.append(0.5 * (mesh.points[a] + mesh.points[b]))
            midpoints[k] = m
        for sub in (edge_key(a, m), edge_key(m, b)):
            edge_parent[sub] = k
            if k in tags:
                tags[sub] = tags[k]
        return m

    nc = mesh.n_cells
    children = mesh.cell_children.copy()
    new_v, new_lvl, new_par, new_idx, new_r, new_s = [], [], [], [], [], []
    for c in cells:
        v0, v1, v2, v3 = (int(x) for x in mesh.cell_vertices[c])
        m01, m12 = midpoint(v0, v1), midpoint(v1, v2)
        m32, m03 = midpoint(v3, v2), midpoint(v0, v3)
        ctr = npts
        npts += 1
        new_pts.append(mesh.points[[v0, v1, v2, v3]].mean(axis=0))
        for sub in ((m01, ctr), (ctr, m32), (m03, ctr), (ctr, m12)):
            edge_parent.pop(edge_key(*sub), None)
        quads = ((v0, m01, ctr, m03), (m01, v1, m12, ctr),
                 (ctr, m12, v2, m32), (m03, ctr, m32, v3))
        for k, q in enumerate(quads):
            children[c, k] = nc + len(new_v)
            new_v.append(q)
            new_lvl.append(mesh.cell_level[c] + 1)
            new_par.append(c)
            new_idx.append(k)
            new_r.append(mesh.cell_r[c])
            new_s.append(mesh.cell_s[c])
    if new_pts:
        points.append(np.array(new_pts))
    out = Mesh(np.concatenate(points),
               np.concatenate([mesh.cell_vertices, np.array(new_v, dtype=np.int64).reshape(-1, 4)]),
               np.concatenate([mesh.cell_level, np.array(new_lvl, dtype=np.int64)]),
               np.concatenate([mesh.cell_parent, np.array(new_par, dtype=np.int64)]),
               np.concatenate([children, np.full((len(new_v), 4), -1, dtype=np.int64)]),
               np.concatenate([mesh.cell_child_index, np.array(new_idx, dtype=np.int64)]),
               np.concatenate([mesh.cell_r, np.array(new_r, dtype=np.int64)]),
               np.concatenate([mesh.cell_s, np.array(new_s, dtype=np.int64)]),
               midpoints, edge_parent, tags)
    return out


def refine_uniform(mesh, times=1):
    for _ in range(times):
        mesh = refine(mesh, mesh.leaves)
    return mesh


# --------------------------------------------------------------------- degrees
def set_degree(mesh, element, r, s=None):
    """Set the degree of one leaf and close the neighbour-difference rule."""
    return set_degrees(mesh, {int(element): int(r)}, None if s is None else {int(element): int(s)})


def set_degrees(mesh, r_new, s_new=None):
    """Set several leaf degrees at once, then raise or lower neighbours
    minimally until adjacent degrees differ by at most one.

    ``s_new`` defaults to ``r_new`` (same degree for both fields).
    """
    if s_new is None:
        s_new = r_new
    for deg in list(r_new.values()) + list(s_new.values()):
        _check_degree(deg)
    for e in set(r_new) | set(s_new):
        if not 0 <= e < mesh.n_cells or not mesh.is_leaf(e):
            raise InvalidArgument(f"invalid leaf id {e}")
    r = mesh.cell_r.copy()
    s = mesh.cell_s.copy()
    for e, d in r_new.items():
        r[e] = d
    for e, d in s_new.items():
        s[e] = d
    if np.array_equal(r, mesh.cell_r) and np.array_equal(s, mesh.cell_s):
        return mesh
    fixed = set(r_new) | set(s_new)
    _close_degrees(mesh, r, set(r_new) or fixed)
    _close_degrees(mesh, s, set(s_new) or fixed)
    return Mesh(mesh.points, mesh.cell_vertices, mesh.cell_level, mesh.cell_parent,
                mesh.cell_children, mesh.cell_child_index, r, s, mesh.midpoints,
                mesh.edge_parent, mesh.edge_tags)


def _close_degrees(mesh, deg, seeds):
    # neighbours move toward the changed cells; changed cells keep their value
    work = list(seeds)
    pinned = set(seeds)
    while work:
        c = work.pop()
        for n in mesh.neighbors(c):
            if deg[n] < deg[c] - 1:
                if n in pinned:
                    deg[c] = deg[n] + 1
                    continue
                deg[n] = deg[c] - 1
                work.append(n)
            elif deg[n] > deg[c] + 1:
                if n in pinned:
                    deg[c] = deg[n] - 1
                    continue
                deg[n] = deg[c] + 1
                work.append(n)


# ------------------------------------------------------------------------ audit
def audit(mesh):
    """Return a list of violated mesh invariants (empty when healthy)."""
    problems = []
    topo = mesh.topology
    if topo.irregular:
        problems.append(f"{len(topo.irregular)} sides with more than one hanging node")
    for c, infos in topo.sides.items():
        for info in infos:
            for n in info.neighbors:
                if abs(int(mesh.cell_r[c]) - int(mesh.cell_r[n])) > 1:
                    problems.append(f"displacement degree jump between {c} and {n}")
                if abs(int(mesh.cell_s[c]) - int(mesh.cell_s[n])) > 1:
                    problems.append(f"pressure degree jump between {c} and {n}")
    try:
        _check_geometry(mesh)
    except GeometryError as exc:
        problems.append(str(exc))
    utags = set()
    ptags = set()
    contact_vertices = set()
    dirichlet_vertices = set()
    for infos in topo.sides.values():
        for info in infos:
            if info.kind != "boundary":
                continue
            tag = mesh.edge_tags.get(info.key)
            if tag is None:
                problems.append(f"untagged boundary edge {info.key}")
                continue
            utags.add(tag[0])
            ptags.add(tag[1])
            if tag[0] == DispTag.CONTACT:
                contact_vertices.update(info.key)
            if tag[0] == DispTag.DIRICHLET:
                dirichlet_vertices.update(info.key)
    if DispTag.DIRICHLET not in utags:
        problems.append("no Dirichlet displacement boundary")
    if PressTag.PRESSURE not in ptags:
        problems.append("no Dirichlet pressure boundary")
    if contact_vertices & dirichlet_vertices:
        problems.append("contact and Dirichlet boundaries touch")
    return sorted(set(problems))
