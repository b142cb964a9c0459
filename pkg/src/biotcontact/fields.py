"""Pointwise evaluation of discrete displacement/pressure fields."""
import numpy as np

from .fem import evaluate_local, point_jacobians


class DiscreteFields:
    """Displacement and pressure of one discrete solution, evaluable at
    arbitrary reference points of arbitrary leaves."""

    def __init__(self, dofmap, u, p):
        self.dofmap = dofmap
        self.mesh = dofmap.mesh
        us, ps = dofmap.u_space, dofmap.p_space
        ux, uy = dofmap.split_u(np.asarray(u, dtype=float))
        self.ux_loc = us.prolongation @ ux
        self.uy_loc = us.prolongation @ uy
        self.p_loc = ps.prolongation @ np.asarray(p, dtype=float)

    def _local(self, space, arrays, positions):
        off = space.offsets
        idx = np.concatenate([np.arange(off[k], off[k + 1]) for k in positions])
        n = off[positions[0] + 1] - off[positions[0]]
        return np.stack([a[idx].reshape(len(positions), n) for a in arrays], axis=1)

    def evaluate(self, positions, ref):
        """Fields at reference points ``ref`` (t, m, 2) of leaves ``positions``.

        Returns a dict with physical points ``x`` (t, m, 2), displacement ``u``
        (t, m, 2), its gradient ``du`` (t, m, 2, 2) indexed [component,
        derivative], pressure ``p`` (t, m) and ``dp`` (t, m, 2).
        """
        positions = np.asarray(positions)
        ref = np.asarray(ref, dtype=float)
        t, m = ref.shape[:2]
        cells = self.mesh.leaves[positions]
        x, inv, det = point_jacobians(self.mesh.corners(cells), ref)
        out = {"x": x, "det": det, "u": np.empty((t, m, 2)), "du": np.empty((t, m, 2, 2)),
               "p": np.empty((t, m)), "dp": np.empty((t, m, 2))}
        us, ps = self.dofmap.u_space, self.dofmap.p_space
        for deg in np.unique(us.degrees[positions]):
            sel = np.flatnonzero(us.degrees[positions] == deg)
            c = self._local(us, (self.ux_loc, self.uy_loc), positions[sel])
            v, g = evaluate_local(int(deg), c, ref[sel], inv[sel])
            out["u"][sel] = v.transpose(0, 2, 1)
            out["du"][sel] = g.transpose(0, 2, 1, 3)
        for deg in np.unique(ps.degrees[positions]):
            sel = np.flatnonzero(ps.degrees[positions] == deg)
            c = self._local(ps, (self.p_loc,), positions[sel])
            v, g = evaluate_local(int(deg), c, ref[sel], inv[sel])
            out["p"][sel] = v[:, 0]
            out["dp"][sel] = g[:, 0]
        return out

    def at_points(self, points):
        """Evaluate at physical points; returns the same dict with t = npts, m = 1."""
        cells, ref = self.mesh.locate(points)
        pos = np.searchsorted(self.mesh.leaves, cells)
        return self.evaluate(pos, ref[:, None, :])


def stress_traction(du, n, mat):
    """Effective-stress traction theta(u) n for gradients ``du`` (..., 2, 2)."""
    div = du[..., 0, 0] + du[..., 1, 1]
    eps = 0.5 * (du + np.swapaxes(du, -1, -2))
    theta = 2.0 * mat.tau * eps
    theta[..., 0, 0] += mat.iota * div
    theta[..., 1, 1] += mat.iota * div
    return np.einsum("...ab,...b->...a", theta, n)
