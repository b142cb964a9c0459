"""scikit-learn style front end: ``fit`` solves on a mesh, ``predict``
evaluates the discrete solution at points."""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_mesh, check_points, check_positive
from .assembly import MaterialParams
from .errors import GeometryError
from .mesh import audit, unit_square_mesh
from .norms import energy_error
from .problems import get_problem
from .study import solve_level


class BiotContactSolver(BaseEstimator):
    """Solve the Biot contact problem of a preset on a given mesh.

    Parameters
    ----------
    problem : preset name (``'paper-section-6'`` / ``'square-contact'`` or
        ``'manufactured'``)
    r : polynomial degree used when ``fit`` receives a subdivision count
    tau, iota, alpha, kappa : material parameters
    tol, max_iter : KKT tolerance and active-set iteration cap
    lumped_multiplier : use the Gauss-Lobatto pairing when reconstructing the
        contact multiplier
    estimate : also compute the residual indicators

    Fitted attributes end with an underscore: ``mesh_``, ``dofmap_``,
    ``solution_``, ``multiplier_``, ``report_``, ``n_dofs_``.
    """

    def __init__(self, problem="paper-section-6", r=1, tau=1.0, iota=1.0, alpha=1.0,
                 kappa=1.0, tol=1e-9, max_iter=50, lumped_multiplier=True, estimate=True):
        self.problem = problem
        self.r = r
        self.tau = tau
        self.iota = iota
        self.alpha = alpha
        self.kappa = kappa
        self.tol = tol
        self.max_iter = max_iter
        self.lumped_multiplier = lumped_multiplier
        self.estimate = estimate

    def _problem(self):
        check_positive(self.r, "r", integer=True)
        check_positive(self.max_iter, "max_iter", integer=True)
        check_positive(self.tol, "tol")
        mat = MaterialParams(self.tau, self.iota, self.alpha, self.kappa)
        return get_problem(self.problem, mat)

    def fit(self, X, y=None):
        """Solve on ``X`` (a Mesh, or ``m`` for a uniform m x m grid)."""
        problem = self._problem()
        mesh = check_mesh(X)
        if isinstance(mesh, int):
            mesh = unit_square_mesh(mesh, self.r, tagger=problem.tagger)
        issues = audit(mesh)
        if issues:
            raise GeometryError("; ".join(issues))
        lvl = solve_level(mesh, problem, self.tol, self.max_iter, self.lumped_multiplier,
                          with_estimate=self.estimate)
        self.problem_ = problem
        self.mesh_ = mesh
        self.dofmap_ = lvl.dofmap
        self.blocks_ = lvl.blocks
        self.solution_ = lvl.solution
        self.multiplier_ = lvl.lam
        self.report_ = lvl.report
        self.fields_ = lvl.fields
        self.level_ = lvl
        self.n_dofs_ = lvl.N
        return self

    def predict(self, X):
        """Displacement and pressure at points: array ``(n, 3)`` of
        ``(u_x, u_y, p)``."""
        check_is_fitted(self, "fields_")
        x = check_points(X)
        f = self.fields_.at_points(x)
        return np.column_stack([f["u"][:, 0], f["p"][:, 0]])

    def transform(self, X):
        """Displacement gradients and pressure gradients at points, shape
        ``(n, 6)``: du_x/dx, du_x/dy, du_y/dx, du_y/dy, dp/dx, dp/dy."""
        check_is_fitted(self, "fields_")
        x = check_points(X)
        f = self.fields_.at_points(x)
        return np.column_stack([f["du"][:, 0].reshape(len(x), 4), f["dp"][:, 0]])

    def energy_error(self, reference):
        """Squared energy errors against a fitted solver on a nested mesh."""
        check_is_fitted(self, "fields_")
        check_is_fitted(reference, "fields_")
        return energy_error(self.fields_, reference.fields_, self.problem_.material)
