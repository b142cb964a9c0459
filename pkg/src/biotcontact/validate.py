"""Randomized property suite for the discrete Biot contact problem.

Every property is a discrete inequality or identity that must hold on any
mesh, degree distribution and data; violations are reported relative to the
magnitudes involved.
"""
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import MaterialParams, assemble, dual_norm
from .errors import BiotContactError
from .mesh import refine, set_degrees, unit_square_mesh
from .solver import CoupledFactor, kkt_residuals, solve_vi
from .space import build_dof_map, contact_constraints

TOL = 1e-9

# (name, statement)
PROPERTIES = (
    ("b_continuity", "|q^T B v| <= sqrt(v^T A v) sqrt(q^T C q)"),
    ("norm_upper_bounds", "v^T A v <= (2 tau + 2 iota) |v|_H1^2 and "
                          "q^T C q <= max(alpha^2/iota, lambda_max(kappa)) |q|_H1^2"),
    ("schur_positivity", "(B v)^T C^-1 (B v) >= 0, hence v^T (A + B^T C^-1 B) v >= v^T A v"),
    ("energy_inequality", "u^T A u + p^T C p + ff.p <= fe.u when 0 is admissible"),
    ("discrete_stability", "sqrt(u^T A u + p^T C p) <= |fe|_A* + |ff|_C* when 0 is admissible"),
    ("kkt_complementarity", "G u <= g, lambda >= 0, lambda (g - G u) = 0"),
    ("block_equations", "A u - B^T p + G^T lambda = fe and -B u - C p = ff"),
    ("uniqueness", "active-set runs from different starts agree"),
)


@dataclass
class PropertyResult:
    name: str
    statement: str
    instances: int = 0
    max_violation: float = 0.0
    tol: float = TOL
    worst_instance: int = -1

    @property
    def passed(self):
        return self.max_violation <= self.tol

    def update(self, k, v):
        self.instances += 1
        if not np.isfinite(v):
            v = np.inf
        if v > self.max_violation or self.worst_instance < 0:
            self.max_violation = max(self.max_violation, float(v))
            self.worst_instance = k


@dataclass
class PropertyReport:
    seed: int
    results: list
    elapsed: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results) and not self.failures

    def __getitem__(self, name):
        return next(r for r in self.results if r.name == name)

    def to_dict(self):
        return {"seed": self.seed, "elapsed_s": self.elapsed, "passed": self.passed,
                "failures": self.failures,
                "properties": [{**asdict(r), "passed": r.passed} for r in self.results]}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def table(self):
        rows = [("property", "instances", "max violation", "tol", "status")]
        for r in self.results:
            rows.append((r.name, str(r.instances), f"{r.max_violation:.3e}", f"{r.tol:.0e}",
                         "PASS" if r.passed else "FAIL"))
        w = [max(len(row[i]) for row in rows) for i in range(5)]
        lines = ["  ".join(c.ljust(w[i]) for i, c in enumerate(row)) for row in rows]
        lines.insert(1, "  ".join("-" * x for x in w))
        for f in self.failures:
            lines.append(f"instance {f['instance']}: {f['error']}")
        return "\n".join(lines)


# ------------------------------------------------------------------ instances
def random_instance(rng, zero_data=False, max_m=4, max_passes=3, max_degree=3):
    """Random mesh, degrees, material and data on the unit square."""
    mesh = unit_square_mesh(int(rng.integers(1, max_m + 1)), 1)
    for _ in range(int(rng.integers(0, max_passes + 1))):
        leaves = mesh.leaves
        k = int(rng.integers(1, len(leaves) + 1))
        mesh = refine(mesh, rng.choice(leaves, size=k, replace=False))
    leaves = mesh.leaves
    degs = rng.integers(1, max_degree + 1, size=len(leaves))
    mesh = set_degrees(mesh, {int(c): int(d) for c, d in zip(leaves, degs)})
    q = rng.normal(size=(2, 2))
    kappa = q @ q.T + 0.2 * np.eye(2)
    mat = MaterialParams(*rng.uniform(0.3, 3.0, size=3), kappa=kappa)
    if zero_data:
        return mesh, mat, (0.0, 0.0), 0.0, lambda x, y: np.full_like(x, 0.1)
    c = rng.normal(size=6)
    fe = lambda x, y: (c[0] + c[1] * x * y, c[2] + c[3] * x)
    ff = lambda x, y: c[4] + c[5] * y
    g0, g1, x0 = rng.uniform(-0.05, 0.2), rng.uniform(0.0, 3.0), rng.uniform(0.2, 0.8)
    g = lambda x, y: g0 + g1 * (x - x0) ** 2
    return mesh, mat, fe, ff, g


def _rel(v, scale):
    return max(0.0, float(v)) / max(1.0, float(scale))


def check_instance(mesh, mat, fe, ff, g, rng, n_vectors=100, mutate=None):
    """Violations of every property on one instance (``None`` if not applicable)."""
    dofmap = build_dof_map(mesh)
    blocks = assemble(mesh, dofmap, mat, fe, ff, gram=True)
    A, B, C = blocks.A, blocks.B, blocks.C
    out = {}
    V = rng.normal(size=(blocks.n_u, n_vectors))
    Q = rng.normal(size=(blocks.n_p, n_vectors))
    vav = np.einsum("ik,ik->k", V, A @ V)
    qcq = np.einsum("ik,ik->k", Q, C @ Q)
    qbv = np.einsum("ik,ik->k", Q, B @ V)
    bound = np.sqrt(vav * qcq)
    out["b_continuity"] = float(np.max((np.abs(qbv) - bound) / bound))

    vgv = np.einsum("ik,ik->k", V, blocks.G_u @ V)
    qgq = np.einsum("ik,ik->k", Q, blocks.G_p @ Q)
    ca = 2 * mat.tau + 2 * mat.iota
    cc = max(mat.storage, float(np.linalg.eigvalsh(mat.kappa).max()))
    out["norm_upper_bounds"] = float(max(np.max((vav - ca * vgv) / (ca * vgv)),
                                         np.max((qcq - cc * qgq) / (cc * qgq))))

    BV = B @ V
    Z = blocks.factor("p").solve(BV)
    schur = np.einsum("ik,ik->k", BV, Z)
    out["schur_positivity"] = float(np.max(-schur / vav))

    cons = contact_constraints(mesh, dofmap, g)
    solve_blocks = mutate(blocks) if mutate is not None else blocks
    factor = CoupledFactor(solve_blocks)
    # tolerance is checked below; a failure here must not abort the suite
    sol = solve_vi(solve_blocks, cons, tol=np.inf, factor=factor)
    res = kkt_residuals(blocks, cons, sol)
    out["kkt_complementarity"] = max(res["feasibility"], res["dual"], res["complementarity"])
    out["block_equations"] = max(res["momentum"], res["mass"])

    # energy bounds need 0 to be admissible; use the non-negative part of the gap
    if np.all(cons.bounds >= 0):
        esol = sol
    else:
        esol = solve_vi(solve_blocks, cons.with_bounds(np.maximum(cons.bounds, 0.0)),
                        tol=np.inf, factor=factor)
    u, p = esol.u, esol.p
    lhs = u @ (A @ u) + p @ (C @ p) + blocks.ff @ p
    rhs = blocks.fe @ u
    out["energy_inequality"] = _rel(lhs - rhs, abs(lhs) + abs(rhs))
    energy = np.sqrt(max(u @ (A @ u) + p @ (C @ p), 0.0))
    dual = dual_norm(blocks, "u", blocks.fe) + dual_norm(blocks, "p", blocks.ff)
    out["discrete_stability"] = _rel(energy - dual, dual)

    other = solve_vi(solve_blocks, cons, tol=np.inf, factor=factor,
                     initial_active=np.ones(len(cons), dtype=bool))
    su = max(1.0, float(np.abs(sol.u).max(initial=0.0)))
    out["uniqueness"] = max(float(np.abs(other.u - sol.u).max(initial=0.0)),
                            float(np.abs(other.p - sol.p).max(initial=0.0))) / su
    return out


def run_properties(seed=1, sizes=20, mutate=None, tol=TOL, **instance_kw):
    """Run the property suite on ``sizes`` random instances; instance 0 has
    zero loads and a non-negative gap."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    results = {name: PropertyResult(name, text, tol=tol) for name, text in PROPERTIES}
    failures = []
    for k in range(int(sizes)):
        inst = random_instance(rng, zero_data=(k == 0), **instance_kw)
        try:
            viol = check_instance(*inst, rng=rng, mutate=mutate)
        except BiotContactError as exc:
            failures.append({"instance": k, "error": f"{type(exc).__name__}: {exc}"})
            continue
        for name, v in viol.items():
            if v is not None:
                results[name].update(k, v)
    rep = PropertyReport(seed, list(results.values()), failures=failures)
    rep.elapsed = time.perf_counter() - t0
    return rep


def flip_coupling_sign(blocks):
    """Test mutation: solve with the coupling block negated."""
    return type(blocks)(blocks.A, -blocks.B, blocks.C, blocks.fe, blocks.ff, blocks.G_u,
                        blocks.G_p, blocks.material, blocks.dofmap)
