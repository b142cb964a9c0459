"""Refinement loops, overrefined reference solutions and convergence tables."""
import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .adaptivity import SIGMA_STAR, apply_decision, decide
from .assembly import assemble
from .error_estimator import _edge_values, estimate
from .errors import InvalidArgument, ReferenceTooLarge, SolverError
from .fields import DiscreteFields
from .mesh import Mesh, refine_uniform, set_degrees, unit_square_mesh
from .norms import energy_error, energy_error_exact
from .problems import get_problem
from .quadrature import MAX_DEGREE
from .solver import VISolution, reconstruct_lambda, solve_linear, solve_vi
from .space import build_dof_map, contact_constraints, contact_edges
from .vtk import write_vtk

log = logging.getLogger(__name__)

SCHEMES = ("h-uniform", "r-uniform", "h-adaptive", "hp-adaptive")
QUADRATURE_NOTE = ("quadrature: gauss-legendre, max(r,s)+1 points/direction for assembly, "
                   "r+2 for indicators, r_ref+2 for errors; contact constraints at gauss-lobatto "
                   "points")


@dataclass
class StudyConfig:
    problem: str = "paper-section-6"
    scheme: str = "h-uniform"
    r: int = 1
    h: float = 0.5
    theta: float = 0.5
    max_dof: int = 20000
    max_levels: int = 40
    sigma_star: float = SIGMA_STAR
    reference: str = "auto"  # auto | overrefined | exact | none
    reference_max_dof: int = 260000
    lumped_multiplier: bool = True
    tolerances: dict = field(default_factory=lambda: {"kkt": 1e-9, "max_iter": 50})
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidArgument(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not (0.0 < self.theta <= 1.0):
            raise InvalidArgument(f"theta must lie in (0, 1], got {self.theta}")
        if int(self.r) != self.r or not 1 <= self.r <= MAX_DEGREE - 1:
            raise InvalidArgument(f"r must be an integer in [1, {MAX_DEGREE - 1}]")
        m = 1.0 / self.h
        if self.h <= 0 or abs(m - round(m)) > 1e-9:
            raise InvalidArgument(f"h must be 1/m for a positive integer m, got {self.h}")
        if self.scheme == "hp-adaptive" and self.r < 2:
            raise InvalidArgument("hp-adaptive runs need r >= 2 for the smoothness fit")
        if self.reference not in ("auto", "overrefined", "exact", "none"):
            raise InvalidArgument(f"unknown reference mode {self.reference!r}")
        if self.max_dof <= 0:
            raise InvalidArgument("max_dof must be positive")

    @property
    def m0(self):
        return int(round(1.0 / self.h))

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        # settings of other subcommands may share the file
        data = {k: v for k, v in data.items() if k != "validate"}
        extra = set(data) - known
        if extra:
            raise InvalidArgument(f"unknown config keys {sorted(extra)}")
        data = dict(data)
        if "tolerances" in data:
            data["tolerances"] = {**cls().tolerances, **data["tolerances"]}
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ConvergenceRecord:
    level: int
    N: int
    err_u_sq: float = float("nan")
    err_p_sq: float = float("nan")
    err: float = float("nan")
    eta_total: float = float("nan")
    eoc: float = float("nan")
    n_leaves: int = 0
    max_r: int = 0
    pdas_iterations: int = 0


@dataclass
class LevelResult:
    mesh: Mesh
    dofmap: object
    blocks: object
    solution: VISolution
    lam: np.ndarray
    fields: DiscreteFields
    report: object = None

    @property
    def N(self):
        return self.dofmap.n_total


# ------------------------------------------------------------------ one level
def solve_level(mesh, problem, tol=1e-9, max_iter=50, lumped=True, with_estimate=True):
    """Assemble, solve and (optionally) estimate on one mesh."""
    dofmap = build_dof_map(mesh)
    blocks = assemble(mesh, dofmap, problem.material, problem.fe, problem.ff,
                      problem.traction, problem.flux, gram=False)
    if problem.has_contact:
        cons = contact_constraints(mesh, dofmap, problem.g)
        sol = solve_vi(blocks, cons, tol=tol, max_iter=max_iter)
        lam = reconstruct_lambda(sol, blocks, dofmap, lumped=lumped)
    else:
        u, p = solve_linear(blocks)
        sol = VISolution(u, p, np.zeros(0), np.zeros(0, dtype=bool), 0, {}, None)
        lam = None
    fields = DiscreteFields(dofmap, sol.u, sol.p)
    res = LevelResult(mesh, dofmap, blocks, sol, lam, fields)
    if with_estimate:
        res.report = estimate(mesh, dofmap, problem.material, sol, lam, problem.g,
                              problem.fe, problem.ff, problem.traction, problem.flux)
    return res


def reference_mesh(mesh):
    """Quarter every leaf and raise every degree by one."""
    fine = refine_uniform(mesh)
    leaves = fine.leaves
    r = {int(c): min(int(fine.cell_r[c]) + 1, MAX_DEGREE) for c in leaves}
    s = {int(c): min(int(fine.cell_s[c]) + 1, MAX_DEGREE) for c in leaves}
    return set_degrees(fine, r, s)


def count_dofs(mesh):
    return build_dof_map(mesh, check=False).n_total


def reference_solution(mesh, problem, config=None):
    config = config or StudyConfig()
    ref = reference_mesh(mesh)
    n = count_dofs(ref)
    if n > config.reference_max_dof:
        raise ReferenceTooLarge(f"reference problem has {n} unknowns "
                                f"(limit {config.reference_max_dof})")
    log.info("reference solve with %d unknowns", n)
    return solve_level(ref, problem, config.tolerances["kkt"], config.tolerances["max_iter"],
                       config.lumped_multiplier, with_estimate=False)


def compute_eoc(errors, dofs):
    """``log(e_{k-1}/e_k) / log(N_k/N_{k-1})``; NaN for the first entry."""
    e = np.asarray(errors, dtype=float)
    n = np.asarray(dofs, dtype=float)
    out = np.full(len(e), np.nan)
    if len(e) > 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            out[1:] = np.log(e[:-1] / e[1:]) / np.log(n[1:] / n[:-1])
    return out


def exponential_fit(dofs, errors, n_min=200):
    """Least-squares line of ``log(err)`` against ``N^(1/3)``.

    Returns ``(slope, intercept, r_squared)`` over entries with ``N >= n_min``.
    """
    n = np.asarray(dofs, dtype=float)
    e = np.asarray(errors, dtype=float)
    sel = (n >= n_min) & np.isfinite(e) & (e > 0)
    if sel.sum() < 2:
        raise InvalidArgument("need at least two levels for the fit")
    x, y = n[sel] ** (1.0 / 3.0), np.log(e[sel])
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    ss = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (res ** 2).sum() / ss if ss > 0 else 1.0
    return float(slope), float(icpt), float(r2)


def span_eoc(records, last=3):
    """Rate between the record ``last`` levels before the end and the end."""
    a, b = records[-1 - last], records[-1]
    return float(np.log(a.err / b.err) / np.log(b.N / a.N))


def mean_eoc(records, last=3):
    e = [r.eoc for r in records if np.isfinite(r.eoc)]
    if not e:
        return float("nan")
    return float(np.mean(e[-last:]))


# -------------------------------------------------------------- refinement
def _initial_mesh(config, problem):
    return unit_square_mesh(config.m0, config.r, tagger=problem.tagger)


def _next_mesh(config, level):
    mesh = level.mesh
    if config.scheme == "h-uniform":
        return refine_uniform(mesh)
    if config.scheme == "r-uniform":
        r = int(mesh.cell_r[mesh.leaves].max())
        if r + 1 > MAX_DEGREE - 1:
            return None
        leaves = mesh.leaves
        return set_degrees(mesh, {int(c): r + 1 for c in leaves})
    decision = decide(mesh, level.fields, level.report.local, config.theta,
                      config.sigma_star, hp=config.scheme == "hp-adaptive")
    level.decision = decision
    return apply_decision(mesh, decision)


class StudyResult:
    def __init__(self, config, levels, records, reference=None):
        self.config = config
        self.levels = levels
        self.records = records
        self.reference = reference

    @property
    def dofs(self):
        return np.array([r.N for r in self.records])

    @property
    def errors(self):
        return np.array([r.err for r in self.records])

    def mean_eoc(self, last=3):
        return mean_eoc(self.records, last)

    def span_eoc(self, last=3):
        return span_eoc(self.records, last)


def run_study(config, problem=None):
    """Run one refinement scheme, compute errors against the reference and
    write the requested outputs."""
    problem = problem or get_problem(config.problem)
    tol, max_iter = config.tolerances["kkt"], config.tolerances["max_iter"]
    mesh = _initial_mesh(config, problem)
    levels = []
    decisions = []
    for k in range(config.max_levels):
        t0 = time.perf_counter()
        try:
            lvl = solve_level(mesh, problem, tol, max_iter, config.lumped_multiplier)
        except SolverError as exc:
            exc.level = k
            exc.args = (f"level {k}: {exc}",) + exc.args[1:]
            raise
        levels.append(lvl)
        log.info("level %d: N=%d leaves=%d eta=%.4e (%.1fs)", k, lvl.N, mesh.n_leaves,
                 lvl.report.total, time.perf_counter() - t0)
        nxt = _next_mesh(config, lvl)
        if nxt is None:
            break
        d = getattr(lvl, "decision", None)
        if d is not None:
            decisions.append((k, d, lvl))
        if count_dofs(nxt) > config.max_dof:
            break
        mesh = nxt

    for k, lvl in enumerate(levels):
        if lvl.solution.constraints is not None and not lvl.solution.kkt_ok(tol):
            raise SolverError(f"level {k}: stored solution violates the KKT conditions")
    records = []
    for k, lvl in enumerate(levels):
        records.append(ConvergenceRecord(k, lvl.N, eta_total=lvl.report.total,
                                         n_leaves=lvl.mesh.n_leaves,
                                         max_r=int(lvl.mesh.cell_r[lvl.mesh.leaves].max()),
                                         pdas_iterations=lvl.solution.iterations))
    mode = config.reference
    if mode == "auto":
        mode = "exact" if problem.exact is not None else "overrefined"
    ref = None
    if mode == "exact":
        if problem.exact is None:
            raise InvalidArgument(f"problem {problem.name!r} has no exact solution")
        for rec, lvl in zip(records, levels):
            rec.err_u_sq, rec.err_p_sq = energy_error_exact(lvl.fields, problem.exact,
                                                            problem.material)
    elif mode == "overrefined":
        ref = reference_solution(levels[-1].mesh, problem, config)
        for rec, lvl in zip(records, levels):
            rec.err_u_sq, rec.err_p_sq = energy_error(lvl.fields, ref.fields, problem.material)
    for rec in records:
        rec.err = float(np.sqrt(rec.err_u_sq + rec.err_p_sq))
    eoc = compute_eoc([r.err if mode != "none" else r.eta_total for r in records],
                      [r.N for r in records])
    for rec, e in zip(records, eoc):
        rec.eoc = float(e)
    result = StudyResult(config, levels, records, ref)
    result.decisions = decisions
    if config.outputs:
        write_outputs(result, problem)
    return result


# ------------------------------------------------------------------ outputs
CSV_COLUMNS = ("level", "N", "err_u_sq", "err_p_sq", "err", "eta_total", "eoc")


def write_convergence_csv(path, records, extra_header=None):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {QUADRATURE_NOTE}\n")
        if extra_header:
            fh.write(f"# {extra_header}\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            row = asdict(r)
            w.writerow(["" if isinstance(row[c], float) and np.isnan(row[c]) else row[c]
                        for c in CSV_COLUMNS])


def read_convergence_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return [{k: (float(v) if v != "" else float("nan")) for k, v in row.items()} for row in rows]


def sample_contact(level, problem, per_edge=9):
    """Multiplier and gap residual ``u.n - g`` sampled along the contact edges.

    Returns an array with columns x, y, lambda, un_minus_g sorted by x.
    """
    mesh = level.mesh
    sol = level.solution
    cons = sol.constraints
    lam_edges = {}
    if cons is not None and level.lam is not None:
        for key, _, _, idx in cons.edges:
            lam_edges[key] = level.lam[idx]
    rows = []
    t = np.linspace(0.0, 1.0, per_edge)
    for key, c, side, n in contact_edges(mesh):
        a, b = mesh.points[key[0]], mesh.points[key[1]]
        x = a + t[:, None] * (b - a)
        f = level.fields.at_points(x)
        un = f["u"][:, 0] @ n
        g = problem.g(x[:, 0], x[:, 1]) if problem.g is not None else np.full(len(x), np.inf)
        lam = _edge_values(mesh, key, lam_edges[key], x) if key in lam_edges else np.zeros(len(x))
        rows.append(np.column_stack([x, lam, un - g]))
    if not rows:
        return np.zeros((0, 4))
    out = np.concatenate(rows)
    out = out[np.lexsort((out[:, 1], out[:, 0]))]
    # drop duplicates at shared edge end points
    keep = np.ones(len(out), dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(out[:, :2], axis=0)) > 1e-14, axis=1)
    return out[keep]


def write_contact_csv(path, samples):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("x", "y", "lambda", "un_minus_g"))
        for row in samples:
            w.writerow([f"{v:.16g}" for v in row])


def write_marks_csv(path, decisions):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("level", "cell", "eta_sq", "action"))
        for k, d, lvl in decisions:
            local = lvl.report.local
            li = lvl.dofmap.u_space.leaf_index
            for c, a in zip(d.marked, d.actions):
                w.writerow((k, int(c), f"{local[li[int(c)]]:.16g}", a))


def write_outputs(result, problem):
    out = result.config.outputs
    directory = out.get("dir", ".")
    os.makedirs(directory, exist_ok=True)
    cfg = result.config
    write_convergence_csv(os.path.join(directory, out.get("csv", "convergence.csv")),
                          result.records,
                          f"problem={problem.name} scheme={cfg.scheme} r={cfg.r} "
                          f"theta={cfg.theta} reference={cfg.reference}")
    if out.get("vtk", True):
        for k, lvl in enumerate(result.levels):
            leaves = lvl.mesh.leaves
            write_vtk(os.path.join(directory, f"level_{k:02d}.vtk"), lvl.mesh, lvl.fields,
                      {"eta_sq": lvl.report.local, "degree": lvl.mesh.cell_r[leaves],
                       "pressure_degree": lvl.mesh.cell_s[leaves]})
    if problem.has_contact and out.get("contact", True):
        write_contact_csv(os.path.join(directory, "contact.csv"),
                          sample_contact(result.levels[-1], problem))
    if getattr(result, "decisions", None):
        write_marks_csv(os.path.join(directory, "marks.csv"), result.decisions)
