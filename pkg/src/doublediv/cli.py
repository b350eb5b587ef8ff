"""Batch front end.

    doublediv solve  --config run.toml --out results/
    doublediv verify --config run.toml --solution results/solution.csv
    doublediv trace  --config run.toml
    doublediv study  --config run.toml

Exit codes: 0 success, 2 finished with a non-convergence warning, 1 error.
The config grammar is documented in ``doublediv.config``.
"""
import argparse
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .analysis import apriori_entry, harnack_ratio, observed_order
from .config import load_config
from .errors import DoubleDivError
from .fields import certify_h1_h2, scalar_field
from .geometry import make_mesh
from .mollify import ExactLevel
from .solver import (DirichletProblem, atomic_write_csv, atomic_write_json, boundary_values,
                     read_solution_csv, solve_measure, solve_smooth)
from .trace import default_schedule, fubini_check, radius_sweep, trace_limit
from .weakform import dirichlet_residual, test_bank


def _problem(cfg):
    return DirichletProblem(cfg.domain, cfg.coeffs, cfg.eta, cfg.solver["p"])


def _schedule(cfg):
    s = cfg.solver
    return {"n_start": int(s["n_start"]), "n_max": int(s["n_max"]), "tol": float(s["tol"])}


def _certificate(cfg):
    try:
        return certify_h1_h2(cfg.coeffs.A, cfg.domain, seed=int(cfg.solver["seed"])).to_dict()
    except DoubleDivError as exc:
        return {"error": str(exc)}


def _solve(cfg, mesh, exact_coefficients=False, levels=None):
    s = cfg.solver
    if exact_coefficients:
        level = ExactLevel(cfg.coeffs)
        sol = solve_smooth(mesh, level, boundary_values(mesh, level, cfg.eta),
                           s["stabilization"], s["deterministic"])
        return sol, None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # recorded in the report
        return solve_measure(_problem(cfg), _schedule(cfg), mesh=mesh, kind=s["kind"],
                             stabilization=s["stabilization"], deterministic=s["deterministic"],
                             levels=levels)


def cmd_solve(cfg, args):
    mesh = make_mesh(cfg.domain, cfg.mesh_size)
    sol, report = _solve(cfg, mesh)
    out = args.out
    sol.write_csv(os.path.join(out, "solution.csv"))
    payload = report.to_dict()
    payload["certificate"] = _certificate(cfg)
    payload["mesh"] = {"h": cfg.mesh_size, "vertices": int(mesh.n_vertices),
                       "cells": int(len(mesh.cells))}
    atomic_write_json(os.path.join(out, "convergence.json"), payload)
    print(f"solve: {len(report.levels)} levels, mode {report.mode}, "
          f"converged={report.converged}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0 if report.converged else 2


def cmd_verify(cfg, args):
    path = args.solution or cfg.verify.get("solution")
    if path is None:
        raise DoubleDivError("verify needs --solution or [verify].solution")
    tol = args.tol if args.tol is not None else float(cfg.verify.get("tol", 1e-4))
    mesh = make_mesh(cfg.domain, cfg.mesh_size)
    sol = read_solution_csv(path, mesh)
    bank = test_bank(cfg.domain, int(cfg.solver["bank_degree"]))
    res = dirichlet_residual(sol, cfg.coeffs, cfg.domain, cfg.eta, bank)
    apr = apriori_entry(_problem(cfg), sol, os.path.basename(path))
    rd = res.to_dict()
    rd["tol"] = tol
    atomic_write_json(os.path.join(args.out, "residual.json"), rd)
    atomic_write_csv(os.path.join(args.out, "residual.csv"), ["function", "residual", "relative"],
                     [[r["name"], repr(r["residual"]), repr(r["relative"])] for r in res.rows])
    atomic_write_json(os.path.join(args.out, "apriori.json"), apr.to_dict())
    ok = res.max_relative < tol
    w = res.worst() if res.rows else None
    print(f"verify: max relative residual {res.max_relative:.3e} (tol {tol:g})")
    if not ok:
        print(f"residual too large: {w['name']} residual {w['residual']:.6g} "
              f"relative {w['relative']:.3e}", file=sys.stderr)
    return 0 if ok else 1


def _trace_rho(cfg):
    expr = cfg.trace.get("rho")
    if expr is not None:
        return scalar_field(expr, cfg.domain.dim)
    if cfg.rho is not None:
        return cfg.rho
    raise DoubleDivError("trace needs [trace].rho or [coefficients].rho")


def cmd_trace(cfg, args):
    t = cfg.trace
    rho = _trace_rho(cfg)
    D = cfg.domain
    tol = args.tol if args.tol is not None else float(t.get("tol", 1e-3))
    coeffs = cfg.coeffs if t.get("use_coefficients", True) else None
    sched = default_schedule(D.gap / 4, int(t.get("levels", 6)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        diag = trace_limit(rho, D, coeffs, sched, m=int(t.get("m", 256)), tol=tol,
                           kind=cfg.solver["kind"], bounded=bool(t.get("bounded", False)))
    payload = diag.to_dict()
    if "sweep_center" in t and D.kind == "disk":
        x0 = np.asarray(t["sweep_center"], float)
        if "sweep_radii" in t:
            radii = [float(r) for r in t["sweep_radii"]]
        else:
            rmax = float(t.get("sweep_rmax", 0.5 * D.radius))
            k = int(t.get("sweep_count", 16))
            radii = list(rmax * np.arange(1, k + 1) / k)
        omega = D.container
        sw = radius_sweep(rho, x0, radii, omega, int(t.get("levels", 6)), tol=tol,
                          kind=cfg.solver["kind"])
        f = lambda x: rho(x).reshape(-1) * (1 + 0.5 * np.cos(x[:, 0]))  # noqa: E731
        polar, cart = fubini_check(f, x0, max(radii))
        sw["fubini"] = {"polar": polar, "cartesian": cart, "gap": abs(polar - cart)}
        payload["radius_sweep"] = sw
    atomic_write_json(os.path.join(args.out, "trace.json"), payload)
    diag.write_csv(os.path.join(args.out, "trace.csv"))
    print(f"trace: {len(sched)} levels, last bl increment "
          f"{diag.bl_consecutive[-1]:.3e}, converged={diag.converged}")
    return 0 if diag.converged else 2


def _study_point(cfg, key, value, mesh, exact, harnack):
    row = {key: value}
    if key == "h":
        mesh = make_mesh(cfg.domain, value)
        sol, rep = _solve(cfg, mesh, bool(cfg.study.get("exact_coefficients", False)))
    else:
        sol, rep = _solve(cfg, mesh, levels=[int(value)])
    pc = _problem(cfg).p_conj
    row["norm_Lpconj"] = sol.norm(pc)
    if exact is not None:
        row["error_L2"] = sol.error(exact, 2.0)
        row["error_Lpconj"] = sol.error(exact, pc)
    res = dirichlet_residual(sol, cfg.coeffs, cfg.domain, cfg.eta,
                             test_bank(cfg.domain, int(cfg.solver["bank_degree"])))
    row["max_residual"] = res.max_relative
    row["apriori_ratio"] = apriori_entry(_problem(cfg), sol).ratio
    if harnack is not None:
        row["harnack_ratio"] = harnack_ratio(sol, *harnack)["ratio"]
    if rep is not None:
        row["levels"] = len(rep.levels)
        row["converged"] = rep.converged
    return row, sol


def cmd_study(cfg, args):
    st = cfg.study
    key = st.get("sweep", "h")
    if key not in ("h", "n"):
        raise DoubleDivError("[study].sweep must be 'h' or 'n'")
    values = list(st.get("values", []))
    if len(values) < 3:
        raise DoubleDivError(f"study needs at least 3 sweep points to fit an order (got {len(values)})")
    exact = scalar_field(st["exact"], cfg.domain.dim) if "exact" in st else cfg.rho
    harnack = None
    if "harnack_center" in st:
        harnack = (np.asarray(st["harnack_center"], float), float(st.get("harnack_radius", 0.1)))
    mesh = make_mesh(cfg.domain, cfg.mesh_size) if key == "n" else None
    jobs = max(1, int(args.jobs or 1))
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        results = list(ex.map(lambda v: _study_point(cfg, key, v, mesh, exact, harnack), values))
    rows = [r for r, _ in results]
    if key == "h" and exact is not None:
        order = observed_order(values, [r["error_L2"] for r in rows])
        for k, r in enumerate(rows):
            r["order"] = order
            r["local_order"] = (None if k == 0 else float(
                np.log(rows[k - 1]["error_L2"] / r["error_L2"]) / np.log(values[k - 1] / values[k])))
    if key == "n":
        sols = [s for _, s in results]
        for k, r in enumerate(rows):
            r["increment"] = None if k == 0 else (sols[k] - sols[k - 1]).norm(_problem(cfg).p_conj)
    cols = [key] + sorted({c for r in rows for c in r} - {key})
    fmt = lambda v: "" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else str(v))  # noqa: E731
    atomic_write_csv(os.path.join(args.out, "study.csv"), cols,
                     [[fmt(r.get(c)) for c in cols] for r in rows])
    atomic_write_json(os.path.join(args.out, "study.json"), {"sweep": key, "rows": rows})
    if "order" in rows[0]:
        print(f"study: observed order {rows[0]['order']:.3f}")
    return 0


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "trace": cmd_trace, "study": cmd_study}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML run configuration")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker cap")
    common.add_argument("--deterministic", action="store_true",
                        help="sorted sparse assembly for byte-identical output")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--tol", type=float, default=None)
    p = argparse.ArgumentParser(prog="doublediv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "verify":
            sp.add_argument("--solution", default=None, help="solution CSV to check")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if not hasattr(args, "solution"):
        args.solution = None
    try:
        cfg = load_config(args.config)
        if args.deterministic:
            cfg.solver["deterministic"] = True
        if args.seed is not None:
            cfg.solver["seed"] = args.seed
        if args.tol is not None and args.command == "solve":
            cfg.solver["tol"] = args.tol
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except DoubleDivError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
