"""Command line entry point: ``solve``, ``study`` and ``validate``."""
import argparse
import json
import logging
import os
import sys

from .errors import BiotContactError
from .mesh import unit_square_mesh
from .problems import get_problem
from .study import (SCHEMES, StudyConfig, exponential_fit, run_study, sample_contact,
                    solve_level, write_contact_csv)
from .validate import run_properties
from .vtk import write_vtk


def _config(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    for key in ("scheme", "r", "theta", "h", "problem"):
        v = getattr(args, key, None)
        if v is not None:
            data[key] = v
    if getattr(args, "max_dof", None) is not None:
        data["max_dof"] = args.max_dof
    outputs = dict(data.get("outputs", {}))
    if args.out:
        outputs["dir"] = args.out
    outputs.setdefault("dir", ".")
    data["outputs"] = outputs
    return StudyConfig.from_dict(data)


def cmd_solve(args):
    cfg = _config(args)
    problem = get_problem(cfg.problem)
    mesh = unit_square_mesh(cfg.m0, cfg.r, tagger=problem.tagger)
    lvl = solve_level(mesh, problem, cfg.tolerances["kkt"], cfg.tolerances["max_iter"],
                      cfg.lumped_multiplier)
    out = cfg.outputs["dir"]
    os.makedirs(out, exist_ok=True)
    leaves = mesh.leaves
    write_vtk(os.path.join(out, "solution.vtk"), mesh, lvl.fields,
              {"eta_sq": lvl.report.local, "degree": mesh.cell_r[leaves]})
    summary = {"N": lvl.N, "leaves": int(mesh.n_leaves), "eta_total": lvl.report.total,
               "contact_terms": lvl.report.contact_terms,
               "pdas_iterations": lvl.solution.iterations,
               "kkt": lvl.solution.residuals}
    if problem.has_contact:
        samples = sample_contact(lvl, problem)
        write_contact_csv(os.path.join(out, "contact.csv"), samples)
        active = lvl.solution.constraints.points[lvl.solution.active]
        summary["active_interval"] = ([float(active[:, 0].min()), float(active[:, 0].max())]
                                      if len(active) else None)
    with open(os.path.join(out, "solve.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_study(args):
    cfg = _config(args)
    res = run_study(cfg)
    print(f"{'level':>5} {'N':>8} {'err':>11} {'eta_total':>11} {'eoc':>7}")
    for r in res.records:
        print(f"{r.level:5d} {r.N:8d} {r.err:11.4e} {r.eta_total:11.4e} {r.eoc:7.3f}")
    print(f"mean eoc (last 3): {res.mean_eoc():.3f}")
    if cfg.scheme == "hp-adaptive":
        try:
            slope, _, r2 = exponential_fit(res.dofs, res.errors)
            print(f"log(err) vs N^(1/3): slope {slope:.4f}, R^2 {r2:.4f}")
        except BiotContactError as exc:
            print(f"exponential fit unavailable: {exc}")
    return 0


def cmd_validate(args):
    seed, sizes = args.seed, args.sizes
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh).get("validate", {})
        seed = data.get("seed", seed) if args.seed is None else seed
        sizes = data.get("sizes", sizes) if args.sizes is None else sizes
    rep = run_properties(seed=1 if seed is None else seed, sizes=20 if sizes is None else sizes)
    print(rep.table())
    print(f"elapsed {rep.elapsed:.1f} s")
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    rep.to_json(os.path.join(out, "validate.json"))
    return 0 if rep.passed else 1


def build_parser():
    p = argparse.ArgumentParser(prog="biotcontact",
                                description="hp finite elements for Biot poroelasticity "
                                            "with Signorini contact")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, hlp in (("solve", cmd_solve, "solve on one uniform mesh"),
                          ("study", cmd_study, "run a refinement scheme")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", help="JSON configuration file")
        s.add_argument("--out", help="output directory")
        s.add_argument("--scheme", choices=SCHEMES)
        s.add_argument("--max-dof", type=int, dest="max_dof")
        s.add_argument("--problem")
        s.add_argument("--r", type=int)
        s.add_argument("--h", type=float, help="initial mesh width 1/m")
        s.add_argument("--theta", type=float)
        s.set_defaults(func=fn)
    s = sub.add_parser("validate", help="run the randomized property suite")
    s.add_argument("--seed", type=int, help="default 1")
    s.add_argument("--sizes", type=int, help="number of random instances (default 20)")
    s.add_argument("--out", help="directory for validate.json")
    s.add_argument("--config", help="JSON file; its optional 'validate' object may set seed "
                                    "and sizes")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BiotContactError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
