"""Numerical checks of the qualitative results: a priori estimate, uniqueness,
nonnegativity, Harnack ratio and the continuity modulus of the levels.

All checks are post-processing of solutions; constants are observed, never
compared with theoretical values.
"""
import csv
import json
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .errors import DomainError
from .fields import lp_norm
from .geometry import make_mesh
from .measures import mollify_measure
from .mollify import admissible_sequence
from .quadrature import domain_rule
from .solver import DirichletProblem, boundary_values, solve_smooth


def _json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)


# --- a priori estimate ----------------------------------------------------

@dataclass
class AprioriReport:
    label: str
    rho_Lpconj: float
    eta_tv: float
    h_L1: float
    G_Lpconj: float
    ratio: "float | None"
    uniqueness_ok: "bool | None" = None

    @property
    def denominator(self):
        return self.eta_tv + self.h_L1 + self.G_Lpconj

    def to_dict(self):
        return asdict(self)


def apriori_entry(problem, solution, label="", zero_tol=1e-8):
    """Norms entering the a priori estimate for one (problem, solution) pair."""
    pc = problem.p_conj
    dom = problem.domain
    rule = domain_rule(dom)
    rn = solution.norm(pc)
    tv = problem.eta.total_variation()
    hn = lp_norm(problem.coeffs.h, dom, 1.0, rule)
    gn = lp_norm(problem.coeffs.G, dom, pc, rule)
    den = tv + hn + gn
    if den > 0:
        return AprioriReport(label, rn, tv, hn, gn, rn / den)
    # zero data: the estimate forces rho = 0
    return AprioriReport(label, rn, tv, hn, gn, None, bool(rn <= zero_tol))


def scale_problem(problem, lam):
    """(eta, G, h) -> lam (eta, G, h) with the operator unchanged."""
    return DirichletProblem(problem.domain, problem.coeffs.scaled(lam), problem.eta.scaled(lam),
                            problem.p, problem.certificate)


def homogeneity(problem, solution, solve, lambdas=(2.0, -1.0, 0.5)):
    """Relative L^{p'} gap between the solution of the scaled problem and
    lam * solution, for each lam.  ``solve(problem) -> SolutionField``."""
    pc = problem.p_conj
    base = solution.norm(pc)
    out = []
    for lam in lambdas:
        s = solve(scale_problem(problem, lam))
        diff = type(solution)(solution.mesh, s.values - lam * solution.values).norm(pc)
        scale = abs(lam) * base
        out.append({"lambda": float(lam), "gap": diff,
                    "relative": diff / scale if scale > 0 else diff})
    return out


def apriori_check(problems, solutions, solve=None, lambdas=(2.0, -1.0, 0.5), labels=None):
    """Reports per problem, the empirical constant (max ratio) and, when a
    ``solve`` callable is given, the homogeneity sub-check on the first
    problem with nonzero data."""
    labels = labels or [f"problem_{k}" for k in range(len(problems))]
    reports = [apriori_entry(pb, s, lab) for pb, s, lab in zip(problems, solutions, labels)]
    ratios = [r.ratio for r in reports if r.ratio is not None]
    out = {"reports": reports, "envelope": max(ratios) if ratios else None,
           "uniqueness_ok": all(r.uniqueness_ok for r in reports if r.ratio is None)}
    if solve is not None:
        for pb, s, r in zip(problems, solutions, reports):
            if r.ratio is not None:
                out["homogeneity"] = homogeneity(pb, s, solve, lambdas)
                break
    return out


def apriori_to_dict(result):
    out = dict(result)
    out["reports"] = [r.to_dict() for r in result["reports"]]
    return out


# --- nonnegativity --------------------------------------------------------

def nonnegativity(solution, rel=1e-8):
    """min nodal rho against -rel * max(1, max rho)."""
    v = solution.values
    floor = -rel * max(1.0, float(v.max()))
    return {"min": float(v.min()), "max": float(v.max()), "floor": floor,
            "ok": bool(v.min() >= floor)}


# --- Harnack ---------------------------------------------------------------

@dataclass
class HarnackReport:
    x0: list
    R: float
    rows: list = dc_field(default_factory=list)
    stable: bool = False
    spread: float = float("nan")
    argmax_shift: "float | None" = None
    failure: "str | None" = None

    def to_dict(self):
        return asdict(self)

    def write_json(self, path):
        _json(self.to_dict(), path)


def ball_nodes(mesh, x0, R):
    return np.flatnonzero(np.linalg.norm(mesh.vertices - np.asarray(x0, float), axis=1) <= R)


def harnack_ratio(solution, x0, R):
    """sup/inf of the nodal values on the closed ball B(x0, R)."""
    idx = ball_nodes(solution.mesh, x0, R)
    if len(idx) == 0:
        raise DomainError("no mesh vertex inside the inner ball; refine the mesh")
    v = solution.values[idx]
    k = idx[int(np.argmax(v))]
    row = {"sup": float(v.max()), "inf": float(v.min()), "nodes": int(len(idx)),
           "argmax": solution.mesh.vertices[k].tolist()}
    row["ratio"] = row["sup"] / row["inf"] if row["inf"] > 0 else None
    return row


def _kolmogorov(problem, samples=64):
    dom = problem.domain
    x, _ = domain_rule(dom, n_radial=8, n_angular=8, panels=samples // 8)
    c = problem.coeffs
    return np.allclose(c.G(x), 0) and np.allclose(c.h(x), 0)


def harnack_check(problem, x0, R, hs, ns, kind="standard_bump", stabilization="auto",
                  tol=0.10):
    """Harnack ratio on B(x0, R) over every (h, n) pair of mesh sizes and
    admissible levels; stable when max/min ratio - 1 <= tol."""
    dom = problem.domain
    x0 = np.asarray(x0, float)
    if dom.distance_to_boundary(x0[None])[0] < 4 * R:
        raise DomainError("B(x0, 4R) must lie inside D")
    if not _kolmogorov(problem):
        raise DomainError("harnack_check needs G = 0 and h = 0")
    if problem.eta.has_atoms and np.any(np.asarray(problem.eta.atom_weights) < 0):
        raise DomainError("harnack_check needs a nonnegative boundary measure")
    rep = HarnackReport(x0.tolist(), float(R))
    argmax = {}
    for n in ns:
        level = admissible_sequence(problem.coeffs, dom, n, kind, problem.p, record=False)
        eta_n = mollify_measure(problem.eta, 1.0 / n, kind) if dom.kind == "disk" else problem.eta
        for h in hs:
            mesh = make_mesh(dom, h)
            sol = solve_smooth(mesh, level, boundary_values(mesh, level, eta_n), stabilization)
            row = harnack_ratio(sol, x0, R)
            row.update(h=float(h), n=int(n), min_rho=float(sol.values.min()))
            rep.rows.append(row)
            argmax[(n, h)] = np.asarray(row["argmax"])
    ratios = [r["ratio"] for r in rep.rows]
    if any(r is None for r in ratios):
        bad = min(rep.rows, key=lambda r: r["inf"])
        rep.failure = (f"nonpositive inf {bad['inf']:.3g} on the inner ball at h={bad['h']}, "
                       f"n={bad['n']}; global min rho = {bad['min_rho']:.3g} "
                       "(check nonnegativity of the discrete solution)")
        return rep
    rep.spread = float(max(ratios) / min(ratios) - 1.0)
    rep.stable = bool(rep.spread <= tol)
    hs_sorted = sorted(hs, reverse=True)
    if len(hs_sorted) >= 2:
        n0 = ns[0]
        rep.argmax_shift = float(np.linalg.norm(argmax[(n0, hs_sorted[0])] - argmax[(n0, hs_sorted[1])]))
    return rep


# --- continuity modulus ----------------------------------------------------

@dataclass
class ModulusReport:
    edges: list
    curves: dict
    envelope: list
    sup_norms: dict
    level_spread: float
    level_independent: bool
    intercept: float

    def to_dict(self):
        return asdict(self)

    def write_json(self, path):
        _json(self.to_dict(), path)

    def write_csv(self, path):
        labels = list(self.curves)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r_lo", "r_hi"] + labels + ["envelope"])
            for k in range(len(self.envelope)):
                w.writerow([repr(self.edges[k]), repr(self.edges[k + 1])]
                           + [repr(self.curves[l][k]) for l in labels] + [repr(self.envelope[k])])


def _pairs(x0, R, npairs, rmax, seed):
    rng = np.random.default_rng(seed)
    d = len(x0)
    if d == 1:
        x = x0 + R * rng.uniform(-1, 1, (npairs, 1))
        y = x + rmax * rng.uniform(-1, 1, (npairs, 1))
    else:
        r = R * np.sqrt(rng.uniform(0, 1, npairs))
        t = rng.uniform(0, 2 * np.pi, npairs)
        x = x0 + np.column_stack([r * np.cos(t), r * np.sin(t)])
        s = rmax * rng.uniform(0, 1, npairs)
        t = rng.uniform(0, 2 * np.pi, npairs)
        y = x + np.column_stack([s * np.cos(t), s * np.sin(t)])
    keep = np.linalg.norm(y - x0, axis=1) <= R
    return x[keep], y[keep]


def oscillation_curve(solution, x0, R, edges, npairs=20000, seed=0):
    """Binned max |rho(x) - rho(y)| over random pairs inside B(x0, R)."""
    x, y = _pairs(np.asarray(x0, float), R, npairs, edges[-1], seed)
    dist = np.linalg.norm(x - y, axis=1)
    osc = np.abs(solution(x) - solution(y))
    k = np.digitize(dist, edges) - 1
    return np.array([osc[k == j].max() if np.any(k == j) else 0.0 for j in range(len(edges) - 1)])


def modulus_check(solutions, x0, R, nbins=12, rmax=None, npairs=20000, seed=0, tol=0.20,
                  fit_bins=4):
    """Oscillation curves of the labelled solutions on B(x0, R), their uniform
    envelope and the level-independence proxy.  The intercept is the
    least-squares line through the first ``fit_bins`` envelope values placed
    at the right bin edges (a bin's maximum is attained at distances up to its
    right edge), evaluated at r = 0 and clipped at 0."""
    rmax = R / 2 if rmax is None else rmax
    edges = np.linspace(0.0, rmax, nbins + 1)
    curves = {lab: oscillation_curve(s, x0, R, edges, npairs, seed) for lab, s in solutions.items()}
    stack = np.array(list(curves.values()))
    envelope = np.maximum.accumulate(stack.max(axis=0))
    live = envelope > 1e-12 * max(1.0, envelope.max())
    spread = float(np.max((stack.max(0) - stack.min(0))[live] / stack.max(0)[live])) if live.any() else 0.0
    m = min(fit_bins, nbins)
    slope, icept = np.polyfit(edges[1:m + 1], envelope[:m], 1)
    return ModulusReport(edges.tolist(), {k: v.tolist() for k, v in curves.items()},
                         envelope.tolist(),
                         {k: float(np.abs(s.values).max()) for k, s in solutions.items()},
                         spread, bool(spread <= tol), float(max(icept, 0.0)))


# --- convergence orders ----------------------------------------------------

def observed_order(hs, errors):
    """Least-squares slope of log(error) against log(h)."""
    hs, errors = np.asarray(hs, float), np.asarray(errors, float)
    if len(hs) < 3:
        raise ValueError("at least 3 sweep points are needed to estimate an order")
    if np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


__all__ = ["AprioriReport", "HarnackReport", "ModulusReport", "apriori_entry", "apriori_check",
           "apriori_to_dict", "homogeneity", "scale_problem", "nonnegativity", "harnack_ratio",
           "harnack_check", "oscillation_curve", "modulus_check", "observed_order"]
