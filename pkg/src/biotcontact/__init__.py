"""hp finite elements for two-field Biot poroelasticity with Signorini contact."""
from .adaptivity import doerfler_mark, hp_decide
from .api import BiotContactSolver
from .assembly import MaterialParams, assemble, dual_norm, energy_norms
from .error_estimator import EstimatorReport, edge_jump, estimate
from .mesh import Mesh, audit, refine, set_degree, unit_square_mesh
from .problems import get_problem
from .solver import reconstruct_lambda, solve_linear, solve_vi
from .space import build_dof_map, contact_constraints
from .study import StudyConfig, run_study
from .validate import run_properties

__version__ = "0.1.0"
