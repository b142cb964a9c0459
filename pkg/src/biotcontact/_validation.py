"""Input checks shared by the estimator interface and the CLI."""
import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .errors import InvalidArgument
from .mesh import Mesh


def check_points(points):
    """Finite ``(n, 2)`` float array of evaluation points."""
    try:
        x = check_array(points, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    except ValueError as exc:
        raise InvalidArgument(str(exc)) from exc
    if x.shape[1] != 2:
        raise InvalidArgument(f"points must have two columns, got {x.shape[1]}")
    return x


def check_positive(value, name, integer=False):
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise InvalidArgument(f"{name} must be {'an integer' if integer else 'a number'}")
    if not np.isfinite(value) or value <= 0:
        raise InvalidArgument(f"{name} must be positive, got {value}")
    return value


def check_mesh(mesh):
    """Accept a :class:`Mesh` or a subdivision count of the unit square."""
    if isinstance(mesh, Mesh):
        return mesh
    if isinstance(mesh, numbers.Integral) and not isinstance(mesh, bool) and mesh >= 1:
        return int(mesh)
    raise InvalidArgument("expected a Mesh or a positive number of subdivisions")
