"""Bulk marking and the h-versus-p decision."""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NothingToMark
from .mesh import refine, set_degrees
from .quadrature import MAX_DEGREE, legendre_coefficients

H, P = "H", "P"
SIGMA_STAR = float(np.log(4.0))


def doerfler_mark(eta_sq, theta=0.5):
    """Smallest prefix of the indicators sorted in decreasing order whose sum
    reaches ``theta`` times the total. Ties go to the smaller index.

    Returns the selected indices in increasing order.
    """
    eta_sq = np.asarray(eta_sq, dtype=float)
    if eta_sq.ndim != 1:
        raise InvalidArgument("indicators must be a 1-d array")
    if not np.all(np.isfinite(eta_sq)) or np.any(eta_sq < 0):
        raise InvalidArgument("indicators must be finite and non-negative")
    if not (0.0 < theta <= 1.0):
        raise InvalidArgument(f"theta must lie in (0, 1], got {theta}")
    total = eta_sq.sum()
    if total <= 0:
        raise NothingToMark("all indicators vanish")
    order = np.lexsort((np.arange(len(eta_sq)), -eta_sq))
    csum = np.cumsum(eta_sq[order])
    # relative slack so theta = 1 is not lost to summation order
    n = int(np.searchsorted(csum, theta * total * (1.0 - 1e-14))) + 1
    n = min(n, int(np.count_nonzero(eta_sq)))
    return np.sort(order[:n])


def decay_slope(magnitudes):
    """Least-squares decay rate of ``log|a_k|`` over ``k = 1, 2, ...``.

    Returns ``None`` when fewer than two values are available.
    """
    a = np.abs(np.asarray(magnitudes, dtype=float))
    if len(a) < 2:
        return None
    k = np.arange(1, len(a) + 1, dtype=float)
    slope = np.polyfit(k, np.log(a), 1)[0]
    return float(-slope)


def shell_magnitudes(nodal_fields):
    """Legendre coefficient size per total-degree shell ``k = 1..p``.

    ``nodal_fields`` is a sequence of ``(p+1, p+1)`` GLL nodal arrays treated
    as components of one field. Shells are ``max(i, j) = k``.
    """
    coeffs = [legendre_coefficients(np.asarray(f, dtype=float)) for f in nodal_fields]
    p = coeffs[0].shape[0] - 1
    i, j = np.meshgrid(np.arange(p + 1), np.arange(p + 1), indexing="ij")
    shell = np.maximum(i, j)
    sq = sum(c ** 2 for c in coeffs)
    scale = np.sqrt(sq.sum())
    mags = np.array([np.sqrt(sq[shell == k].sum()) for k in range(1, p + 1)])
    return mags, scale


def field_slope(nodal_fields):
    mags, scale = shell_magnitudes(nodal_fields)
    if scale == 0.0:
        return np.inf
    # coefficients at round-off level count as resolved
    mags = np.maximum(mags, 1e-13 * scale)
    s = decay_slope(mags)
    return np.inf if s is None else s


def hp_decide(fields, sigma_star=SIGMA_STAR):
    """``'P'`` when every field's Legendre coefficients decay at least like
    ``exp(-sigma_star k)``, ``'H'`` otherwise.

    ``fields`` is a list of fields, each a list of ``(p+1, p+1)`` nodal
    component arrays; degree one is always refined in ``h``.
    """
    degs = {np.asarray(c).shape[0] - 1 for f in fields for c in f}
    if min(degs) < 2:
        return H
    slopes = [field_slope(f) for f in fields]
    return P if min(slopes) >= sigma_star * (1.0 - 1e-12) else H


@dataclass
class MarkDecision:
    marked: np.ndarray  # cell ids
    actions: list

    @property
    def h_cells(self):
        return [c for c, a in zip(self.marked, self.actions) if a == H]

    @property
    def p_cells(self):
        return [c for c, a in zip(self.marked, self.actions) if a == P]


def decide(mesh, fields, eta_sq, theta=0.5, sigma_star=SIGMA_STAR, hp=True):
    """Mark leaves by bulk criterion and choose the refinement type.

    ``fields`` is a :class:`DiscreteFields`; ``eta_sq`` is ordered like
    ``mesh.leaves``. Without ``hp`` every action is ``'H'``.
    """
    pos = doerfler_mark(eta_sq, theta)
    cells = mesh.leaves[pos]
    actions = []
    us, ps = fields.dofmap.u_space, fields.dofmap.p_space
    for k, c in zip(pos, cells):
        if not hp or mesh.cell_r[c] >= MAX_DEGREE or mesh.cell_s[c] >= MAX_DEGREE:
            actions.append(H)
            continue
        r, s = int(mesh.cell_r[c]), int(mesh.cell_s[c])
        ux = fields.ux_loc[us.offsets[k]:us.offsets[k + 1]].reshape(r + 1, r + 1)
        uy = fields.uy_loc[us.offsets[k]:us.offsets[k + 1]].reshape(r + 1, r + 1)
        pp = fields.p_loc[ps.offsets[k]:ps.offsets[k + 1]].reshape(s + 1, s + 1)
        actions.append(hp_decide([[ux, uy], [pp]], sigma_star))
    return MarkDecision(cells, actions)


def apply_decision(mesh, decision):
    """Raise degrees of ``P`` cells, then quarter ``H`` cells."""
    p_cells = decision.p_cells
    if p_cells:
        mesh = set_degrees(mesh, {int(c): int(mesh.cell_r[c]) + 1 for c in p_cells},
                           {int(c): int(mesh.cell_s[c]) + 1 for c in p_cells})
    if decision.h_cells:
        mesh = refine(mesh, decision.h_cells)
    return mesh
