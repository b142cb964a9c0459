"""Acceptance criteria 1-9 on the obstacle benchmark.

Each test records one ``C<k> PASS|FAIL`` line; the lines are printed in the
terminal summary (see conftest) and by ``python3 tests/test_acceptance.py``.
Studies run once per session and are shared between criteria.
"""
import functools
import itertools
import time

import numpy as np
import pytest

from biotcontact.assembly import assemble
from biotcontact.mesh import unit_square_mesh
from biotcontact.problems import get_problem
from biotcontact.solver import reconstruct_lambda, reduced_problem, solve_vi
from biotcontact.space import build_dof_map, contact_constraints
from biotcontact.study import StudyConfig, exponential_fit, run_study, solve_level
from biotcontact.validate import run_properties

BENCH = "paper-section-6"
N_TARGET_C1 = 100000

RESULTS = {}


def record(key, ok, detail):
    RESULTS[key] = f"{key} {'PASS' if ok else 'FAIL'}: {detail}"
    print(RESULTS[key])
    return ok


@functools.lru_cache(maxsize=None)
def study(scheme, r, max_dof, problem=BENCH, h=0.5):
    t0 = time.perf_counter()
    res = run_study(StudyConfig(problem=problem, scheme=scheme, r=r, max_dof=max_dof, h=h))
    res.seconds = time.perf_counter() - t0
    return res


def _fmt(values):
    return "[" + ", ".join(f"{v:.3f}" for v in values) + "]"


# ------------------------------------------------------------------ C1
def test_c1_uniform_h_r1():
    res = study("h-uniform", 1, 13000)
    m = res.mean_eoc(3)
    ok = abs(m - 0.5) <= 0.1
    record("C1", ok, f"h-uniform r=1 mean eoc(last 3)={m:.3f} (target 0.5+-0.1), "
                     f"N_max={res.dofs[-1]} of ~{N_TARGET_C1} targeted, "
                     f"reference N={res.reference.N}, {res.seconds:.0f}s")
    assert ok


# ------------------------------------------------------------------ C2
def _matched_ratio(base, other):
    """err(other) / err_base(N) at each level of ``other`` inside the base range,
    with the base curve interpolated linearly in log-log."""
    ln, le = np.log(base.dofs), np.log(base.errors)
    out = []
    for n, e in zip(other.dofs, other.errors):
        if ln[0] <= np.log(n) <= ln[-1]:
            out.append(e / np.exp(np.interp(np.log(n), ln, le)))
    return np.array(out)


@pytest.mark.parametrize("r,max_dof", [(2, 13000), (3, 30000)])
def test_c2_uniform_h_higher_degree(r, max_dof):
    base = study("h-uniform", 1, 13000)
    res = study("h-uniform", r, max_dof)
    eoc = [rec.eoc for rec in res.records if np.isfinite(rec.eoc)][-3:]
    ratio = _matched_ratio(base, res)
    in_band = all(0.4 <= e <= 0.7 for e in eoc)
    smaller = len(ratio) > 0 and bool(np.all(ratio < 1.0))
    ok = in_band and smaller
    record(f"C2 r={r}", ok, f"eoc(last 3)={_fmt(eoc)} in [0.4,0.7]: {in_band}; "
                            f"err/err_r1 at matched N={_fmt(ratio)} < 1: {smaller}, "
                            f"{res.seconds:.0f}s")
    assert ok


# ------------------------------------------------------------------ C3
def test_c3_uniform_r():
    res = study("r-uniform", 1, 13000, h=0.25)
    eoc = [rec.eoc for rec in res.records if np.isfinite(rec.eoc)]
    rising = eoc[-1] > eoc[len(eoc) // 2]
    ok = eoc[-1] >= 0.8 and rising
    record("C3", ok, f"r-uniform h=1/4 eoc={_fmt(eoc)}, last={eoc[-1]:.3f} (>=0.8), "
                     f"max r={res.records[-1].max_r}, {res.seconds:.0f}s")
    assert ok


# ------------------------------------------------------------------ C4
@pytest.mark.parametrize("r,target,tol", [(2, 1.0, 0.2), (3, 1.5, 0.25)])
def test_c4_h_adaptive(r, target, tol):
    res = study("h-adaptive", r, 15000)
    rate = res.span_eoc(3)
    ok = abs(rate - target) <= tol
    record(f"C4 r={r}", ok, f"h-adaptive eoc over last 3 levels={rate:.3f} "
                            f"(target {target}+-{tol}), per-level mean={res.mean_eoc(3):.3f}, "
                            f"N_max={res.dofs[-1]}, {res.seconds:.0f}s")
    assert ok


# ------------------------------------------------------------------ C5
def test_c5_hp_adaptive():
    res = study("hp-adaptive", 2, 6000)
    slope, _, r2 = exponential_fit(res.dofs, res.errors, n_min=200)
    ok = slope < 0 and r2 >= 0.95
    record("C5", ok, f"hp-adaptive log(err) vs N^(1/3): slope={slope:.3f}, R^2={r2:.3f}, "
                     f"{len(res.records)} levels, N_max={res.dofs[-1]}, max r="
                     f"{res.records[-1].max_r}, {res.seconds:.0f}s")
    assert ok


# ------------------------------------------------------------------ C6
@pytest.mark.parametrize("r", [1, 2])
def test_c6_manufactured(r):
    res = study("h-uniform", r, 5000, problem="manufactured")
    e = res.errors
    eoc_h = np.log2(e[:-1] / e[1:])
    ok = abs(eoc_h[-1] - r) <= 0.1
    record(f"C6 r={r}", ok, f"manufactured eoc w.r.t. h={_fmt(eoc_h)}, "
                            f"last={eoc_h[-1]:.3f} (target {r}+-0.1)")
    assert ok


# ------------------------------------------------------------------ C7
def test_c7_property_suite():
    t0 = time.perf_counter()
    rep = run_properties(seed=1, sizes=20)
    dt = time.perf_counter() - t0
    worst = max(rep.results, key=lambda p: p.max_violation / p.tol)
    ok = rep.passed and dt <= 60.0 and all(p.instances >= 20 for p in rep.results)
    record("C7", ok, f"{len(rep.results)} properties x 20 instances, worst "
                     f"{worst.name}={worst.max_violation:.1e} (tol 1e-9), {dt:.1f}s (<=60s)")
    assert ok


# ------------------------------------------------------------------ C8
def _enumerate(blocks, cons):
    """Minimum reduced energy over all equality-constrained active sets."""
    D, ell = reduced_problem(blocks)
    D = np.asarray(D.toarray() if hasattr(D, "toarray") else D)
    G = cons.rows.toarray()
    g = cons.bounds
    Dinv_G = np.linalg.solve(D, G.T)
    u0 = np.linalg.solve(D, ell)
    S = G @ Dinv_G
    best = None
    for mask in itertools.product([False, True], repeat=len(g)):
        idx = np.flatnonzero(mask)
        u = u0
        if len(idx):
            try:
                mu = np.linalg.solve(S[np.ix_(idx, idx)], G[idx] @ u0 - g[idx])
            except np.linalg.LinAlgError:
                continue
            u = u0 - Dinv_G[:, idx] @ mu
        if np.any(G @ u > g + 1e-10):
            continue
        energy = 0.5 * u @ D @ u - ell @ u
        if best is None or energy < best[0] - 1e-14:
            best = (energy, u)
    return best[1]


C8_CASES = [(m, r, load) for (m, r) in ((1, 1), (2, 1), (2, 2), (3, 3), (11, 1), (4, 2))
            for load in (1.0, 8.0, 40.0)]


def test_c8_enumeration():
    prob = get_problem(BENCH)
    worst, count = 0.0, 0
    for m, r, load in C8_CASES:
        mesh = unit_square_mesh(m, r, tagger=prob.tagger)
        dm = build_dof_map(mesh)
        blocks = assemble(mesh, dm, prob.material, (0.0, -load), -1.0)
        cons = contact_constraints(mesh, dm, prob.g)
        assert len(cons) <= 12
        sol = solve_vi(blocks, cons)
        ref = _enumerate(blocks, cons)
        worst = max(worst, np.abs(sol.u - ref).max() / max(1.0, np.abs(ref).max()))
        count += 1
    ok = worst <= 1e-9
    record("C8", ok, f"{count} instances with <=12 constraints, max coefficient deviation "
                     f"from enumeration {worst:.1e} (tol 1e-9)")
    assert ok


# ------------------------------------------------------------------ C9
def test_c9_contact_physics():
    prob = get_problem(BENCH)
    lvl = solve_level(unit_square_mesh(32, 2, tagger=prob.tagger), prob, with_estimate=False)
    cons = lvl.solution.constraints
    lam = reconstruct_lambda(lvl.solution, lvl.blocks, lvl.dofmap)
    x = cons.points[:, 0]
    order = np.argsort(x)
    x, lam_s = x[order], lam[order]
    active = lvl.solution.active[order]
    tip = int(np.argmin(np.abs(x - 0.5)))
    idx = np.flatnonzero(active)
    single = len(idx) > 0 and np.all(np.diff(idx) == 1) and idx[0] <= tip <= idx[-1]
    ok = lam_s.min() >= -1e-9 and lam_s[tip] > 0 and abs(x[tip] - 0.5) < 1e-12 and single
    record("C9", ok, f"min lambda={lam_s.min():.2e}, lambda(0.5)={lam_s[tip]:.3e}, contact "
                     f"zone [{x[idx[0]]:.3f}, {x[idx[-1]]:.3f}] single interval: {single}")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
