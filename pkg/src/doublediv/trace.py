"""Boundary traces of solutions by convolution.

For a solution rho on Omega and a subdomain D, rho_eps = rho * psi_eps is
sampled on the boundary of D; the measures rho_eps sigma converge weakly to a
measure eta_tilde and eta = eta_tilde - kappa sigma is the boundary datum for
which rho solves the Dirichlet problem on D.
"""
import csv
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import TraceError
from .geometry import boundary_grid, make_domain
from .measures import BoundaryMeasure, bl_distance, kappa_values
from .mollify import Mollifier
from .quadrature import disk_rule, gauss_legendre, interval_rule
from .weakform import dirichlet_residual


def _grid(domain, m):
    return boundary_grid(domain, 2 if domain.kind == "interval" else m)


# rotation of the angular nodes by an irrational fraction of the step, so no
# node pair lies on the tangent line at equispaced boundary nodes (matters for
# rho discontinuous across the boundary)
_TWIST = (np.sqrt(2.0) - 1.0) * np.pi


def _kernel_average(f, x, eps, kind, dim, n_radial=16, n_angular=32):
    """sum_q W_q f(x - eps z_q) for points x (N, d); f returns (M,) + shape."""
    moll = Mollifier(kind, eps, dim)
    z, W, _ = moll.rule(n_radial, n_angular)
    if dim == 2:
        t = _TWIST / n_angular
        z = z @ np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])
    y = (x[:, None, :] - eps * z[None]).reshape(-1, dim)
    v = np.asarray(f(y), float)
    v = v.reshape((len(x), len(W)) + v.shape[1:])
    return np.tensordot(W, v, axes=(0, 1))


def boundary_convolution(rho, domain, eps, m=256, kind="standard_bump"):
    """rho_eps at the boundary nodes of ``domain`` (rho defined on Omega)."""
    if domain.gap is not None and not eps < domain.gap:
        raise TraceError(f"eps = {eps} must be smaller than the gap {domain.gap} to Omega")
    g = _grid(domain, m)
    return _kernel_average(lambda y: np.asarray(rho(y), float).reshape(len(y)),
                           g.nodes, eps, kind, domain.dim), g


def phi_c2_norm(domain):
    """sup|phi| + sup|grad phi| + sup||D^2 phi|| on the closed domain for the
    bubble phi with phi = 0 and unit outward normal derivative on the boundary."""
    if domain.kind == "disk":
        R = domain.radius
        return R / 2 + 1.0 + 1.0 / R
    L = domain.beta - domain.alpha
    return L / 4 + 1.0 + 2.0 / L


def _neighbourhood_rule(domain, r):
    if domain.kind == "disk":
        return disk_rule(domain.center, domain.radius + r, n_radial=64, n_angular=192)
    return interval_rule(domain.alpha - r, domain.beta + r, panels=128)


def _spec(M):
    return np.max(np.abs(np.linalg.eigvalsh(M)), axis=-1)


def proof_constant(rho, coeffs, domain, delta=None, theta=None):
    """The constant bounding int rho_eps d sigma for all eps < delta.

    Returns a dict with the three summands and their total.  theta defaults to
    the sampled ellipticity constant of A on D_{3 delta}.
    """
    delta = domain.gap / 4 if delta is None else delta
    x, w = _neighbourhood_rule(domain, 3 * delta)
    r = np.asarray(rho(x), float).reshape(len(x))
    if r.min() < 0:
        raise TraceError("negative rho: use the signed path (trace_limit(..., bounded=True))")
    d = domain.dim
    A, b, G, h = coeffs.A(x), coeffs.b(x), coeffs.G(x), coeffs.h(x)
    if theta is None:
        lam = np.linalg.eigvalsh(A)
        theta = float(min(1.0, lam[:, 0].min(), (1 / lam[:, -1]).min()))
    k = phi_c2_norm(domain)
    t1 = k / theta * float(np.sum(w * (d * _spec(A) + np.linalg.norm(b, axis=1)) * r))
    t2 = k / theta * float(np.sum(w * (d * _spec(G) + np.linalg.norm(h, axis=1))))
    t3 = domain.boundary_measure / theta * float(_spec(G).max())
    return {"C": t1 + t2 + t3, "rho_term": t1, "data_term": t2, "boundary_term": t3,
            "theta": theta, "phi_C2": k, "delta": delta}


@dataclass
class TraceDiagnostics:
    eps: list
    masses: list
    densities: list
    bl_consecutive: list
    C: "dict | None"
    eta_tilde: BoundaryMeasure
    eta: BoundaryMeasure
    kappa: np.ndarray
    nodes: np.ndarray
    residual: object = None
    converged: bool = False
    warnings: list = dc_field(default_factory=list)

    def to_dict(self):
        return {"eps": self.eps, "masses": self.masses, "bl_consecutive": self.bl_consecutive,
                "proof_constant": self.C, "converged": self.converged,
                "warnings": self.warnings,
                "eta": self.eta.to_dict(), "kappa": [float(v) for v in self.kappa],
                "residual": None if self.residual is None else self.residual.to_dict()}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node"] + [f"x{k + 1}" for k in range(self.nodes.shape[1])]
                       + [f"rho_eps_{k}" for k in range(len(self.eps))] + ["eta"])
            eta_v = self.eta_values
            for i, x in enumerate(self.nodes):
                w.writerow([i] + [repr(float(t)) for t in x]
                           + [repr(float(d[i])) for d in self.densities] + [repr(float(eta_v[i]))])

    @property
    def eta_values(self):
        """eta as density values at the nodes (1D: endpoint weights)."""
        if self.eta.density is not None:
            return self.eta.density
        return self.eta.atom_weights


def _as_measure(domain, values):
    if domain.kind == "interval":
        return BoundaryMeasure.endpoints(domain, values[0], values[1])
    return BoundaryMeasure.from_density(domain, values)


def default_schedule(delta, levels=6):
    return [delta / 2**k for k in range(1, levels + 1)]


def trace_limit(rho, domain, coeffs=None, schedule=None, m=256, tol=1e-3,
                kind="standard_bump", bounded=False, residual=True, delta=None):
    """Trace measures rho_eps sigma along the schedule and the estimated limit.

    With ``coeffs`` the boundary density kappa is subtracted, the proof
    constant is evaluated and the Dirichlet residual of (rho, eta) reported.
    Signed rho is accepted only with ``bounded=True``.
    """
    delta = domain.gap / 4 if delta is None else delta
    schedule = default_schedule(delta) if schedule is None else list(schedule)
    if max(schedule) >= (domain.gap if domain.gap is not None else np.inf):
        raise TraceError("eps schedule must stay below the gap to Omega")
    # sign check on the neighbourhood the kernels touch
    xs, _ = _neighbourhood_rule(domain, max(schedule))
    rv = np.asarray(rho(xs), float).reshape(len(xs))
    signed = rv.min() < 0
    sup = float(np.abs(rv).max())
    if signed and not bounded:
        raise TraceError("signed unbounded trace unsupported")
    out_warn = []
    dens, masses, bls, measures = [], [], [], []
    for eps in schedule:
        v, g = boundary_convolution(rho, domain, eps, m, kind)
        if signed and np.abs(v).max() > sup * (1 + 1e-9):
            out_warn.append(f"|rho_eps| exceeds sup|rho| at eps={eps}")
        dens.append(v)
        masses.append(float(np.sum(g.weights * v)))
        mu = _as_measure(domain, v * (g.weights if domain.kind == "interval" else 1.0))
        if measures:
            bls.append(bl_distance(mu, measures[-1]))
        measures.append(mu)
    eta_tilde = measures[-1]
    kap = np.zeros(g.m)
    C = None
    if coeffs is not None:
        kap = kappa_values(coeffs.A, coeffs.G, g.nodes, g.normals)
        if not signed:
            C = proof_constant(rho, coeffs, domain, delta)
    eta = _as_measure(domain, dens[-1] - kap)
    converged = bool(bls) and bls[-1] < tol
    if len(bls) >= 2 and all(b2 >= b1 for b1, b2 in zip(bls, bls[1:])):
        msg = "bl distances non-decreasing across the schedule"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        out_warn.append(msg)
    diag = TraceDiagnostics(list(schedule), masses, dens, bls, C, eta_tilde, eta, kap,
                            g.nodes, converged=converged, warnings=out_warn)
    if residual and coeffs is not None:
        diag.residual = dirichlet_residual(rho, coeffs, domain, eta)
    return diag


def commutation_gap(rho, A, domain, eps, m=64, kind="standard_bump"):
    """max over boundary nodes of ||(A rho)_eps - A rho_eps|| / rho_eps."""
    g = _grid(domain, m)
    d = domain.dim
    Ar = _kernel_average(lambda y: A(y) * np.asarray(rho(y), float).reshape(-1, 1, 1),
                         g.nodes, eps, kind, d)
    r = _kernel_average(lambda y: np.asarray(rho(y), float).reshape(len(y)), g.nodes, eps, kind, d)
    diff = Ar - A(g.nodes) * r[:, None, None]
    return float(np.max(_spec(diff) / r))


def radius_sweep(rho, x0, radii, omega, schedule_levels=6, m=128, kind="standard_bump", tol=1e-3):
    """Trace limits on the circles |x - x0| = R compared with rho sigma.

    Returns a dict with per-radius bl distances between the finest trace
    measure and rho restricted to the circle, and their median.
    """
    rows = []
    for R in radii:
        ball = make_domain("disk", center=tuple(x0), radius=float(R), container=omega)
        diag = trace_limit(rho, ball, None, default_schedule(ball.gap / 4, schedule_levels),
                           m=m, tol=tol, kind=kind, residual=False)
        g = _grid(ball, m)
        exact = BoundaryMeasure.from_density(ball, np.asarray(rho(g.nodes), float).reshape(-1))
        rows.append({"R": float(R), "bl": bl_distance(diag.eta_tilde, exact),
                     "bl_consecutive": diag.bl_consecutive[-1] if diag.bl_consecutive else None})
    bl = np.array([r["bl"] for r in rows])
    return {"radii": rows, "median_bl": float(np.median(bl)), "max_bl": float(bl.max())}


def fubini_check(f, x0, R, n_radii=16, n_angular=256, n_cart=64):
    """Polar iterated integral int_0^R int_{|x-x0|=r} f dsigma dr versus a
    Cartesian iterated Gauss rule over the disk; returns (polar, cartesian)."""
    x0 = np.asarray(x0, float)
    r, wr = gauss_legendre(n_radii, 0.0, R)
    th = 2 * np.pi * np.arange(n_angular) / n_angular
    polar = 0.0
    for ri, wi in zip(r, wr):
        pts = x0 + ri * np.column_stack([np.cos(th), np.sin(th)])
        polar += wi * np.sum(f(pts)) * 2 * np.pi * ri / n_angular
    t, wt = gauss_legendre(n_cart, -np.pi / 2, np.pi / 2)
    s, ws = gauss_legendre(n_cart, -1.0, 1.0)
    cart = 0.0
    for ti, wti in zip(t, wt):
        x1 = R * np.sin(ti)
        half = R * np.cos(ti)
        pts = x0 + np.column_stack([np.full(n_cart, x1), half * s])
        cart += wti * R * np.cos(ti) * half * np.sum(ws * f(pts))
    return float(polar), float(cart)


__all__ = ["boundary_convolution", "proof_constant", "trace_limit", "radius_sweep",
           "fubini_check", "commutation_gap", "TraceDiagnostics", "phi_c2_norm"]
