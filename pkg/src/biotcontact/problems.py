"""Built-in problem presets on the unit square."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assembly import MaterialParams
from .errors import InvalidArgument
from .mesh import DispTag, PressTag, contact_square_tagger


@dataclass(frozen=True)
class Problem:
    """Data of one Biot (contact) problem.

    ``g`` is ``None`` for contact-free problems. ``exact(x, y)``, when given,
    returns a dict with ``u`` (..., 2), ``du`` (..., 2, 2) indexed
    [component, derivative], ``p`` and ``dp`` (..., 2).
    """

    name: str
    material: MaterialParams = field(default_factory=MaterialParams)
    fe: object = (0.0, 0.0)
    ff: object = 0.0
    g: Optional[Callable] = None
    traction: Optional[Callable] = None
    flux: Optional[Callable] = None
    tagger: Callable = contact_square_tagger
    exact: Optional[Callable] = None

    @property
    def has_contact(self):
        return self.g is not None


def obstacle_gap(x, y):
    return 3.0 * (1.0 - np.cos(x - 0.5))


def square_contact(material=None):
    """Block pressed onto a curved obstacle under gravity-type loads.

    Top edge clamped with zero pressure, bottom edge in contact with
    ``3 (1 - cos(x - 0.5))``, all other edges traction- and flux-free.
    """
    return Problem("square-contact", material or MaterialParams(), fe=(0.0, -1.0), ff=-1.0,
                   g=obstacle_gap)


class Manufactured:
    """Smooth contact-free solution vanishing on the clamped top edge::

        u = (sin(pi x) cos(pi y / 2), cos(pi x) cos(pi y / 2))
        p = cos(pi x) cos(pi y / 2)
    """

    a = np.pi
    b = np.pi / 2.0

    def __init__(self, material):
        self.mat = material

    def exact(self, x, y):
        a, b = self.a, self.b
        sx, cx = np.sin(a * x), np.cos(a * x)
        sy, cy = np.sin(b * y), np.cos(b * y)
        u = np.stack([sx * cy, cx * cy], axis=-1)
        du = np.stack([np.stack([a * cx * cy, -b * sx * sy], -1),
                       np.stack([-a * sx * cy, -b * cx * sy], -1)], -2)
        p = cx * cy
        dp = np.stack([-a * sx * cy, -b * cx * sy], -1)
        return {"u": u, "du": du, "p": p, "dp": dp}

    def _second(self, x, y):
        a, b = self.a, self.b
        sx, cx = np.sin(a * x), np.cos(a * x)
        sy, cy = np.sin(b * y), np.cos(b * y)
        lap_u = -(a * a + b * b) * np.stack([sx * cy, cx * cy], -1)
        # gradient of div u = cos(a x) (a cy - b sy)
        w = a * cy - b * sy
        grad_div = np.stack([-a * sx * w, cx * (-a * b * sy - b * b * cy)], -1)
        hp = np.stack([np.stack([-a * a * cx * cy, a * b * sx * sy], -1),
                       np.stack([a * b * sx * sy, -b * b * cx * cy], -1)], -2)
        return lap_u, grad_div, hp, cx * w

    def fe(self, x, y):
        m = self.mat
        lap_u, grad_div, _, _ = self._second(x, y)
        dp = self.exact(x, y)["dp"]
        f = -m.tau * lap_u - (m.tau + m.iota) * grad_div + m.alpha * dp
        return f[..., 0], f[..., 1]

    def ff(self, x, y):
        m = self.mat
        _, _, hp, div = self._second(x, y)
        p = self.exact(x, y)["p"]
        return np.einsum("ab,...ab->...", m.kappa, hp) - m.storage * p - m.alpha * div

    def traction(self, x, y, nx, ny):
        m = self.mat
        e = self.exact(x, y)
        du = e["du"]
        div = du[..., 0, 0] + du[..., 1, 1]
        n = np.array([nx, ny])
        eps = 0.5 * (du + np.swapaxes(du, -1, -2))
        t = 2 * m.tau * eps @ n + (m.iota * div - m.alpha * e["p"])[..., None] * n
        return t[..., 0], t[..., 1]

    def flux(self, x, y, nx, ny):
        dp = self.exact(x, y)["dp"]
        return dp @ (self.mat.kappa @ np.array([nx, ny]))


def manufactured_tagger(mid, normal):
    """Clamped top edge; every other edge carries Neumann data."""
    if normal[1] > 0.5:
        return DispTag.DIRICHLET, PressTag.PRESSURE
    return DispTag.TRACTION, PressTag.FLUX


def manufactured(material=None):
    mat = material or MaterialParams()
    sol = Manufactured(mat)
    return Problem("manufactured", mat, fe=sol.fe, ff=sol.ff, g=None, traction=sol.traction,
                   flux=sol.flux, tagger=manufactured_tagger, exact=sol.exact)


PRESETS = {
    "square-contact": square_contact,
    # name used by the study configuration files
    "paper-section-6": square_contact,
    "manufactured": manufactured,
}


def get_problem(name, material=None):
    try:
        return PRESETS[name](material)
    except KeyError:
        raise InvalidArgument(f"unknown problem {name!r}; choose from {sorted(PRESETS)}") from None
