"""Linear and contact solves of the coupled displacement/pressure system.

The contact problem is solved by a primal-dual active-set iteration. The
coupled matrix ``K = [[A, -B^T], [-B, -C]]`` is factorized once; each active
set then only needs the small dense matrix ``G K^{-1} G^T`` restricted to the
active rows, whose columns are computed the first time a constraint becomes
active. The reduced operator ``A + B^T C^{-1} B`` is never formed.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CyclingError, GeometryError, NoConvergence, SolverError
from .quadrature import gauss_legendre, gauss_lobatto, interpolation_matrix

log = logging.getLogger(__name__)


@dataclass
class VISolution:
    u: np.ndarray
    p: np.ndarray
    lam: np.ndarray
    active: np.ndarray
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    constraints: object = None

    def kkt_ok(self, tol=1e-9):
        r = self.residuals
        return all(r.get(k, 0.0) <= tol for k in ("feasibility", "dual", "complementarity"))


class CoupledFactor:
    """Sparse LU of the symmetric indefinite block matrix."""

    def __init__(self, blocks):
        self.n_u, self.n_p = blocks.n_u, blocks.n_p
        K = sp.bmat([[blocks.A, -blocks.B.T], [-blocks.B, -blocks.C]], format="csc")
        self.K = K
        try:
            self.lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc

    def solve(self, rhs):
        x = self.lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite solution")
        return x


def _rhs(blocks):
    return np.concatenate([blocks.fe, blocks.ff])


def block_residual(blocks, u, p, lam_force=None):
    """Residuals of both block rows; ``lam_force`` is G^T lambda if any."""
    r1 = blocks.A @ u - blocks.B.T @ p - blocks.fe
    if lam_force is not None:
        r1 = r1 + lam_force
    r2 = -blocks.B @ u - blocks.C @ p - blocks.ff
    return r1, r2


def solve_linear(blocks, factor=None):
    """Contact-free solve; returns ``(u, p)``."""
    factor = factor or CoupledFactor(blocks)
    rhs = _rhs(blocks)
    x = factor.solve(rhs)
    # one step of iterative refinement keeps the residual at round-off level
    res = rhs - factor.K @ x
    x = x + factor.solve(res)
    res = rhs - factor.K @ x
    if np.linalg.norm(res) > 1e-10 * (1.0 + np.linalg.norm(rhs)):
        raise SolverError(f"linear solve residual {np.linalg.norm(res):.3e} too large")
    return x[:blocks.n_u], x[blocks.n_u:]


def solve_vi(blocks, constraints, tol=1e-9, max_iter=50, c_pdas=1.0, initial_active=None,
             factor=None):
    """Primal-dual active-set solve of the discrete contact problem.

    Returns a :class:`VISolution` whose ``lam`` holds the nodal multipliers
    (``A u - B^T p + G^T lam = fe``).
    """
    G = constraints.rows.tocsr()
    g = constraints.bounds
    m = G.shape[0]
    factor = factor or CoupledFactor(blocks)
    rhs = _rhs(blocks)
    x0 = factor.solve(rhs)
    x0 = x0 + factor.solve(rhs - factor.K @ x0)
    if m == 0:
        u, p = x0[:blocks.n_u], x0[blocks.n_u:]
        sol = VISolution(u, p, np.zeros(0), np.zeros(0, dtype=bool), 0, {}, constraints)
        sol.residuals = kkt_residuals(blocks, constraints, sol)
        return sol

    Gx0 = G @ x0[:blocks.n_u]
    S = np.zeros((m, m))
    have = np.zeros(m, dtype=bool)

    def ensure(cols):
        need = [i for i in np.flatnonzero(cols) if not have[i]]
        for i in need:
            e = np.zeros(blocks.n_u + blocks.n_p)
            e[:blocks.n_u] = G[i].toarray().ravel()
            z = factor.solve(e)
            S[:, i] = G @ z[:blocks.n_u]
            have[i] = True

    if initial_active is None:
        active = g <= 0
    else:
        active = np.asarray(initial_active, dtype=bool).copy()
    seen = {active.tobytes(): 0}
    lam = np.zeros(m)
    un = Gx0.copy()
    for it in range(1, max_iter + 1):
        lam = np.zeros(m)
        if active.any():
            ensure(active)
            idx = np.flatnonzero(active)
            S_aa = S[np.ix_(idx, idx)]
            try:
                lam[idx] = np.linalg.solve(S_aa, Gx0[idx] - g[idx])
            except np.linalg.LinAlgError as exc:
                raise SolverError("active constraints are linearly dependent") from exc
            un = Gx0 - S[:, idx] @ lam[idx]
        else:
            un = Gx0.copy()
        new = lam + c_pdas * (un - g) > 0
        log.debug("pdas iteration %d: %d active", it, int(new.sum()))
        if np.array_equal(new, active):
            break
        key = new.tobytes()
        if key in seen:
            raise CyclingError(f"active set cycled after {it} iterations")
        seen[key] = it
        active = new
    else:
        sol = _finish(blocks, constraints, factor, rhs, lam, active, max_iter)
        raise NoConvergence(f"no convergence in {max_iter} iterations",
                            residuals=sol.residuals, iterations=max_iter)
    sol = _finish(blocks, constraints, factor, rhs, lam, active, it)
    if not sol.kkt_ok(tol):
        raise NoConvergence(f"KKT residuals {sol.residuals} exceed {tol}",
                            residuals=sol.residuals, iterations=it)
    return sol


def _finish(blocks, constraints, factor, rhs, lam, active, it):
    G = constraints.rows
    r = rhs.copy()
    r[:blocks.n_u] -= G.T @ lam
    x = factor.solve(r)
    x = x + factor.solve(r - factor.K @ x)
    sol = VISolution(x[:blocks.n_u], x[blocks.n_u:], lam, active.copy(), it, {}, constraints)
    sol.residuals = kkt_residuals(blocks, constraints, sol)
    return sol


def kkt_residuals(blocks, constraints, sol):
    """Scaled KKT residuals of a candidate solution."""
    G, g = constraints.rows, constraints.bounds
    un = G @ sol.u if G.shape[0] else np.zeros(0)
    su = max(1.0, float(np.max(np.abs(sol.u), initial=0.0)), float(np.max(np.abs(g), initial=0.0)))
    sl = max(1.0, float(np.max(np.abs(sol.lam), initial=0.0)))
    r1, r2 = block_residual(blocks, sol.u, sol.p, G.T @ sol.lam if G.shape[0] else None)
    return {
        "feasibility": float(np.max(un - g, initial=0.0)) / su,
        "dual": float(np.max(-sol.lam, initial=0.0)) / sl,
        "complementarity": float(np.max(np.abs(sol.lam * (g - un)), initial=0.0)) / (su * sl),
        "momentum": float(np.linalg.norm(r1)) / (1.0 + float(np.linalg.norm(blocks.fe)) + sl),
        "mass": float(np.linalg.norm(r2)) / (1.0 + float(np.linalg.norm(blocks.ff))),
    }


# ------------------------------------------------------------ multiplier
def contact_pairing(dofmap, constraints, lumped=True):
    """Matrix ``W[j, k] = <psi_k, phi_j . n>`` on the contact boundary.

    ``psi_k`` is the nodal trace basis attached to constraint ``k`` and
    ``phi_j`` runs over the free displacement unknowns.
    """
    us = dofmap.u_space
    nf = us.n_free
    rows, cols, vals = [], [], []
    for key, cell, n, idx in constraints.edges:
        d = us.edge_degree[key]
        length = float(np.linalg.norm(dofmap.mesh.points[key[1]] - dofmap.mesh.points[key[0]]))
        rule = gauss_lobatto(d + 1) if lumped else gauss_legendre(d + 1)
        L = interpolation_matrix(d, rule.points)  # (q, d+1)
        M = (L * (rule.weights * 0.5 * length)[:, None]).T @ L
        for a, raw in enumerate(us.edge_dofs(key)):
            for f, cf in us.free_expansion(raw):
                for comp in (0, 1):
                    if abs(n[comp]) < 1e-14:
                        continue
                    for b, k in enumerate(idx):
                        if M[a, b] != 0.0:
                            rows.append(f + comp * nf)
                            cols.append(k)
                            vals.append(cf * n[comp] * M[a, b])
    W = sp.csr_matrix((vals, (rows, cols)), shape=(2 * nf, len(constraints)))
    W.sum_duplicates()
    return W


def reconstruct_lambda(solution, blocks, dofmap, lumped=True):
    """Nodal values of the contact multiplier density on the contact edges.

    Solves ``<lam_h, v . n> = -a(u, v) + b(v, p) + <fe, v>`` for all discrete
    ``v`` with a non-vanishing normal trace.
    """
    constraints = solution.constraints
    if constraints is None or len(constraints) == 0:
        return np.zeros(0)
    W = contact_pairing(dofmap, constraints, lumped)
    R = blocks.fe - blocks.A @ solution.u + blocks.B.T @ solution.p
    rows = np.flatnonzero(np.diff(W.indptr) > 0)
    Ws = W[rows]
    if Ws.shape[0] == Ws.shape[1]:
        try:
            lam = spla.spsolve(Ws.tocsc(), R[rows])
        except RuntimeError as exc:
            raise GeometryError("singular contact mass matrix") from exc
        if not np.all(np.isfinite(lam)):
            raise GeometryError("singular contact mass matrix")
        return np.atleast_1d(lam)
    lam, *_ = np.linalg.lstsq(Ws.toarray(), R[rows], rcond=None)
    return lam


def reduced_problem(blocks):
    """Dense reduced operator and load ``(D, l)`` with the pressure eliminated.

    Only meant for small verification instances.
    """
    A = blocks.A.toarray()
    B = blocks.B.toarray()
    C = blocks.C.toarray()
    CiB = np.linalg.solve(C, B)
    D = A + B.T @ CiB
    ell = blocks.fe - B.T @ np.linalg.solve(C, blocks.ff)
    return 0.5 * (D + D.T), ell


def pressure_from_displacement(blocks, u):
    """Pressure solving the second block row for given displacement."""
    return -blocks.factor("p").solve(blocks.ff + blocks.B @ u)


