"""P1 Galerkin solver for the smoothed problem and the level schedule.

With smooth coefficients the double divergence equation is the conservative
convection-diffusion equation

    div(A grad v - v btilde) = div r,   btilde = b - div A,   r = div G - h,

where (div M)_i = sum_j d_j m^{ij}.  Its weak form on D is
int (A grad v - v btilde) . grad phi = int r . grad phi for interior hats phi,
and v = eta_n + kappa_n on the boundary.
"""
import csv
import json
import os
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import EllipticityError, GeometryError, SolverError
from .fields import lq_of_values
from .geometry import as_points, boundary_grid, make_mesh
from .measures import (BoundaryMeasure, bl_distance, hat_averages, kappa_values,
                       mollify_measure)
from .mollify import admissible_sequence, ExactLevel
from .quadrature import mesh_rule, p1_at_rule, simplex_rule

DIRECT_LIMIT = 200_000


def default_p(dim):
    return 4.0 if dim == 2 else 2.5


@dataclass
class DirichletProblem:
    domain: object            # D, carrying its container Omega
    coeffs: object            # CoefficientSet
    eta: BoundaryMeasure
    p: float = None
    certificate: object = None

    def __post_init__(self):
        if self.p is None:
            self.p = default_p(self.domain.dim)
        if not self.p > self.domain.dim:
            raise ValueError(f"exponent p must exceed d (got p={self.p})")
        if self.domain.container is None or not self.domain.gap > 0:
            raise GeometryError("problem domain needs a container with a positive gap")

    @property
    def p_conj(self):
        return self.p / (self.p - 1)


@dataclass
class DivergenceFormData:
    """btilde, r and A of a level, evaluated lazily at points."""

    level: object

    def at(self, x):
        f = self.level.fields(x)
        return {"A": f["A"], "btilde": f["b"] - f["divA"], "r": f["divG"] - f["h"]}

    def btilde(self, x):
        return self.at(x)["btilde"]

    def r(self, x):
        return self.at(x)["r"]

    def identity_check(self, domain, npts=20, seed=0, step=1e-4):
        """Max gap between div A_n from kernel derivatives and from centred
        differences of A_n, over random interior points."""
        rng = np.random.default_rng(seed)
        if domain.kind == "disk":
            r = 0.8 * domain.radius * np.sqrt(rng.random(npts))
            t = 2 * np.pi * rng.random(npts)
            x = np.asarray(domain.center) + np.column_stack([r * np.cos(t), r * np.sin(t)])
        else:
            x = (domain.alpha + (domain.beta - domain.alpha) * (0.1 + 0.8 * rng.random(npts)))[:, None]
        d = x.shape[1]
        fd = np.zeros((npts, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = step
            fd += (self.level.A(x + e)[:, :, j] - self.level.A(x - e)[:, :, j]) / (2 * step)
        return float(np.abs(fd - self.level.fields(x)["divA"]).max())


def reformulate(level):
    if not hasattr(level, "fields"):
        raise TypeError("level has no derivative access (expected a mollify level)")
    return DivergenceFormData(level)


class SolutionField:
    """Piecewise-linear function on a mesh."""

    def __init__(self, mesh, values, info=None):
        values = np.asarray(values, float)
        if values.shape != (mesh.n_vertices,):
            raise ValueError("one value per mesh vertex expected")
        if not np.all(np.isfinite(values)):
            raise SolverError("non-finite nodal values")
        self.mesh, self.values = mesh, values
        self.info = info or {}
        self._tree = None

    def __call__(self, x):
        x = as_points(x, self.mesh.dim)
        V = self.mesh.vertices
        if self.mesh.dim == 1:
            order = np.argsort(V[:, 0])
            return np.interp(x[:, 0], V[order, 0], self.values[order])
        return self._eval2d(x)

    def _eval2d(self, x, k=12):
        m = self.mesh
        P = m.vertices[m.cells]
        if self._tree is None:
            self._tree = cKDTree(P.mean(axis=1))
            T = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)
            self._Tinv = np.linalg.inv(T)
        k = min(k, len(m.cells))
        _, cand = self._tree.query(x, k=k)
        cand = cand.reshape(len(x), k)
        out = np.full(len(x), np.nan)
        todo = np.ones(len(x), bool)
        best = np.full(len(x), -np.inf)
        best_val = np.zeros(len(x))
        for j in range(k):
            c = cand[:, j]
            lam12 = np.einsum("nij,nj->ni", self._Tinv[c], x - P[c, 0])
            lam = np.column_stack([1 - lam12.sum(1), lam12])
            val = np.sum(lam * self.values[m.cells[c]], axis=1)
            hit = todo & (lam.min(1) >= -1e-10)
            out[hit] = val[hit]
            todo &= ~hit
            better = lam.min(1) > best
            best[better] = lam.min(1)[better]
            # outside the polygon: clip barycentrics of the closest cell
            lc = np.clip(lam, 0, None)
            lc /= lc.sum(1, keepdims=True)
            best_val[better] = np.sum(lc * self.values[m.cells[c]], axis=1)[better]
        out[todo] = best_val[todo]
        return out

    def norm(self, q, degree=4):
        if np.isinf(q):
            return float(np.abs(self.values).max())
        x, w, bary, cells = mesh_rule(self.mesh, degree)
        return lq_of_values(p1_at_rule(self.values, bary, cells), w, q)

    def error(self, exact, q=2.0, degree=6):
        """||self - exact||_{L^q} over the mesh, ``exact`` callable or SolutionField."""
        x, w, bary, cells = mesh_rule(self.mesh, degree)
        diff = p1_at_rule(self.values, bary, cells) - np.asarray(exact(x), float).reshape(len(x))
        return lq_of_values(diff, w, q)

    def __sub__(self, other):
        return SolutionField(self.mesh, self.values - other.values)

    def write_csv(self, path):
        d = self.mesh.dim
        head = ["vertex"] + [f"x{k + 1}" for k in range(d)] + ["rho"]
        rows = [[str(i)] + [repr(float(t)) for t in v] + [repr(float(r))]
                for i, (v, r) in enumerate(zip(self.mesh.vertices, self.values))]
        atomic_write_csv(path, head, rows)


def atomic_write_csv(path, header, rows):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def atomic_write_json(path, payload):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_solution_csv(path, mesh):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        head = next(r)
        data = np.array([[float(v) for v in row] for row in r])
    if len(data) != mesh.n_vertices or data.shape[1] != mesh.dim + 2:
        raise GeometryError(f"{path}: solution does not match the mesh "
                            f"({len(data)} rows vs {mesh.n_vertices} vertices)")
    if np.abs(data[:, 1:1 + mesh.dim] - mesh.vertices).max() > 1e-9 * (1 + mesh.domain.diameter):
        raise GeometryError(f"{path}: vertex coordinates do not match the mesh")
    return SolutionField(mesh, data[:, -1])


def _bary_gradients(mesh):
    """Gradients of the barycentric coordinates, shape (nc, d+1, d)."""
    P = mesh.vertices[mesh.cells]
    B = np.swapaxes(P[:, 1:] - P[:, :1], 1, 2)          # (nc, d, d) columns = edges
    Binv = np.linalg.inv(B)                             # rows = grads of lambda_1..d
    g = np.concatenate([-Binv.sum(axis=1, keepdims=True), Binv], axis=1)
    return g


def assemble(mesh, data, stabilization="auto", deterministic=False):
    """Stiffness matrix and load vector of the divergence-form problem.

    ``data`` is a DivergenceFormData (or anything with ``at(x)``).
    stabilization: "none"; "auto" adds streamline diffusion on cells whose
    Peclet number |btilde| h / (2 theta) exceeds 1; "upwind" additionally
    applies discrete upwinding so every off-diagonal entry is <= 0.
    """
    d = mesh.dim
    bary, wq = simplex_rule(d, 2)
    cells = mesh.cells
    nc, nl = cells.shape
    P = mesh.vertices[cells]
    vol = mesh.cell_measures()
    grads = _bary_gradients(mesh)
    xq = np.einsum("qk,ckd->cqd", bary, P).reshape(-1, d)
    f = data.at(xq)
    A = f["A"].reshape(nc, len(wq), d, d)
    bt = f["btilde"].reshape(nc, len(wq), d)
    r = f["r"].reshape(nc, len(wq), d)
    for k, v in (("A", A), ("btilde", bt), ("r", r)):
        if not np.all(np.isfinite(v)):
            raise SolverError(f"non-finite {k} at assembly quadrature points")
    W = vol[:, None] * wq[None, :]                          # (nc, nq)
    Abar = np.einsum("cq,cqij->cij", W, A)
    Kd = np.einsum("cid,cde,cje->cij", grads, Abar, grads)
    # convection: -int psi_j btilde . grad psi_i
    Kc = -np.einsum("cq,qj,cqd,cid->cij", W, bary, bt, grads)
    F = np.einsum("cq,cqd,cid->ci", W, r, grads)
    K = Kd + Kc
    info = {"stabilized_cells": 0, "upwind_edges": 0}
    if stabilization in ("auto", "upwind"):
        hT = _cell_diameters(P)
        lam = np.linalg.eigvalsh(A.mean(axis=1))
        theta = np.minimum(lam[:, 0], 1.0 / lam[:, -1])
        if np.any(theta <= 0):
            raise EllipticityError("A_n not positive definite at an assembly point")
        bmag = np.linalg.norm(bt.mean(axis=1), axis=1)
        pe = bmag * hT / (2 * theta)
        hot = pe > 1
        if hot.any():
            tau = np.zeros(nc)
            tau[hot] = hT[hot] / (2 * bmag[hot]) * (1 - 1 / pe[hot])
            bb = bt.mean(axis=1)
            Ks = np.einsum("c,c,cd,cjd,ce,cie->cij", tau, vol, bb, grads, bb, grads)
            K = K + Ks
        info["stabilized_cells"] = int(hot.sum())
    rows = np.repeat(cells, nl, axis=1).ravel()
    cols = np.tile(cells, (1, nl)).ravel()
    vals = K.ravel()
    if deterministic:
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
    n = mesh.n_vertices
    M = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    M.sum_duplicates()
    if stabilization == "upwind":
        M, info["upwind_edges"] = _discrete_upwind(M)
    load = np.zeros(n)
    np.add.at(load, cells.ravel(), F.ravel())
    return M, load, info


def _cell_diameters(P):
    nl = P.shape[1]
    if nl == 2:
        return np.abs(P[:, 1, 0] - P[:, 0, 0])
    e = [np.linalg.norm(P[:, i] - P[:, j], axis=1) for i, j in ((0, 1), (1, 2), (2, 0))]
    return np.max(e, axis=0)


def _discrete_upwind(M):
    """Add the graph Laplacian with weights max(0, m_ij, m_ji) so all
    off-diagonals become <= 0.  Row and column sums are unchanged."""
    C = M.tocoo()
    off = C.row != C.col
    Dm = sp.coo_matrix((np.maximum(C.data[off], 0), (C.row[off], C.col[off])), shape=M.shape).tocsr()
    Dm = Dm.maximum(Dm.T)
    n_edges = Dm.nnz // 2
    if n_edges == 0:
        return M, 0
    L = sp.diags(np.asarray(Dm.sum(axis=1)).ravel()) - Dm
    return (M + L).tocsr(), n_edges


def _condest(K):
    try:
        lu = spla.splu(K.tocsc())
    except RuntimeError:
        return np.inf
    op = spla.LinearOperator(K.shape, matvec=lu.solve, rmatvec=lambda v: lu.solve(v, trans="T"))
    return float(spla.onenormest(K) * spla.onenormest(op))


def solve_linear(K, rhs):
    n = K.shape[0]
    if n <= DIRECT_LIMIT:
        try:
            lu = spla.splu(K.tocsc())
            u = lu.solve(rhs)
        except RuntimeError as exc:
            raise SolverError(f"singular system: {exc}", condition=np.inf) from None
        iters = 0
    else:
        ilu = spla.spilu(K.tocsc(), drop_tol=1e-5, fill_factor=20)
        pre = spla.LinearOperator(K.shape, matvec=ilu.solve)
        u, status = spla.bicgstab(K, rhs, rtol=1e-10, atol=0.0, M=pre, maxiter=5000)
        iters = status
        if status != 0:
            raise SolverError("iterative solve did not reach relative residual 1e-10",
                              condition=_condest(K))
    res = np.linalg.norm(K @ u - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if not np.all(np.isfinite(u)) or res > 1e-8:
        raise SolverError(f"linear solve failed (relative residual {res:.2e})",
                          condition=_condest(K))
    return u, {"iterations": int(iters), "relative_residual": float(res)}


def boundary_values(mesh, level, eta):
    """Dirichlet data eta (hat-averaged density) + kappa of the level, at the
    boundary vertices in mesh order."""
    dom = mesh.domain
    idx = mesh.boundary_indices
    x = mesh.vertices[idx]
    s = dom.parameter_of(x)
    nu = dom.boundary_normal(s)
    kap = kappa_values(level.A, level.G, x, nu)
    if dom.kind == "interval":
        w = np.zeros(len(idx))
        for a, m in zip(eta.atom_params, eta.atom_weights):
            w[np.isclose(s, a)] += m
        return w + kap
    order = np.argsort(s)
    ev = np.empty(len(idx))
    ev[order] = hat_averages(eta, s[order])
    return ev + kap


def solve_smooth(mesh, level, g, stabilization="auto", deterministic=False):
    """P1 Galerkin solution with v = g at the boundary vertices.

    ``g`` is an array over ``mesh.boundary_indices`` or a callable of x.
    """
    data = reformulate(level)
    K, F, info = assemble(mesh, data, stabilization, deterministic)
    bidx = mesh.boundary_indices
    gv = np.asarray(g(mesh.vertices[bidx]) if callable(g) else g, float)
    if gv.shape != bidx.shape:
        raise ValueError("boundary data must have one value per boundary vertex")
    free = np.flatnonzero(~mesh.boundary)
    u = np.zeros(mesh.n_vertices)
    u[bidx] = gv
    K = K.tocsr()
    rhs = F[free] - K[free][:, bidx] @ gv
    uf, sinfo = solve_linear(K[free][:, free], rhs)
    u[free] = uf
    info.update(sinfo)
    info["n_unknowns"] = int(len(free))
    return SolutionField(mesh, u, info)


@dataclass
class ConvergenceReport:
    mode: str
    p: float
    tol: float
    levels: list = dc_field(default_factory=list)
    converged: bool = False
    warnings: list = dc_field(default_factory=list)

    @property
    def increments(self):
        return [lv["increment"] for lv in self.levels if lv["increment"] is not None]

    def to_dict(self):
        return {"mode": self.mode, "p": self.p, "p_conj": self.p / (self.p - 1), "tol": self.tol,
                "converged": self.converged, "warnings": list(self.warnings),
                "levels": self.levels}

    def write_json(self, path):
        atomic_write_json(path, self.to_dict())


def level_schedule(n_start, n_max):
    if not n_max >= n_start >= 1:
        raise ValueError("schedule needs n_max >= n_start >= 1")
    out, n = [], int(n_start)
    while n < n_max:
        out.append(n)
        n *= 2
    out.append(int(n_max))
    return out


def solve_measure(problem, schedule=None, mesh=None, h=None, kind="standard_bump",
                  stabilization="auto", deterministic=False, level_cache=None,
                  levels=None):
    """Run the admissible-approximation schedule n = n_start, 2 n_start, ... .

    Each level mollifies the coefficients and the boundary measure with
    eps = 1/n, solves the smooth problem and records the L^{p'} Cauchy
    increment.  With atoms in 2D only weak convergence of eta_n holds, so the
    run is flagged "weak-only" and stops once the increment or the
    bl_distance of eta_n to eta stagnates below tol.
    """
    sch = dict(n_start=4, n_max=64, tol=1e-4)
    sch.update(schedule or {})
    tol = float(sch["tol"])
    dom = problem.domain
    if mesh is None:
        mesh = make_mesh(dom, h if h is not None else (dom.diameter / 40))
    ns = levels if levels is not None else level_schedule(sch["n_start"], sch["n_max"])
    if 1.0 / ns[0] >= dom.gap:
        raise GeometryError(f"cutoff would touch D: 1/n_start = {1.0 / ns[0]:.4g} "
                            f">= gap delta = {dom.gap:.4g}")
    weak = dom.kind == "disk" and problem.eta.has_atoms
    report = ConvergenceReport("weak-only" if weak else "norm", problem.p, tol)
    pc = problem.p_conj
    prev, sol, prev_bl = None, None, None
    for n in ns:
        key = (n, kind)
        if level_cache is not None and key in level_cache:
            level = level_cache[key]
        else:
            level = admissible_sequence(problem.coeffs, dom, n, kind, problem.p)
            if level_cache is not None:
                level_cache[key] = level
        eta_n = mollify_measure(problem.eta, 1.0 / n, kind) if dom.kind == "disk" else problem.eta
        g = boundary_values(mesh, level, eta_n)
        sol = solve_smooth(mesh, level, g, stabilization, deterministic)
        bl = bl_distance(eta_n, problem.eta)
        inc = None if prev is None else (sol - prev).norm(pc)
        report.levels.append({
            "n": int(n), "eps": 1.0 / n, "norm_Lpconj": sol.norm(pc), "increment": inc,
            "coefficient_distances": dict(level.distances), "bl_distance": bl,
            "eta_tv": eta_n.total_variation(), "min_rho": float(sol.values.min()),
            "max_rho": float(sol.values.max()), "solve": dict(sol.info)})
        incs = report.increments
        if len(incs) >= 3 and incs[-1] >= incs[-2] >= incs[-3] and incs[-1] > tol:
            msg = f"Cauchy increments non-decreasing over 3 levels (n={n})"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            report.warnings.append(msg)
        if inc is not None and inc < tol:
            report.converged = True
            break
        if weak and inc is not None and prev_bl is not None and len(incs) >= 2:
            stagnant = incs[-1] >= 0.9 * incs[-2] and abs(prev_bl - bl) < tol
            if stagnant:
                report.converged = True
                report.warnings.append(f"weak-only stop: increments and bl_distance stagnated at n={n}")
                break
        prev, prev_bl = sol, bl
    return sol, report


def solve_exact_coefficients(mesh, coeffs, g, **kw):
    """solve_smooth with closed-form (unmollified) coefficients."""
    return solve_smooth(mesh, ExactLevel(coeffs), g, **kw)


__all__ = ["DirichletProblem", "DivergenceFormData", "SolutionField", "ConvergenceReport",
           "reformulate", "solve_smooth", "solve_measure", "assemble", "boundary_values",
           "level_schedule", "solve_exact_coefficients", "read_solution_csv", "boundary_grid"]
