"""Test functions and residuals of the weak identities.

For a test function u vanishing on the boundary of D the Dirichlet identity
reads

    int_D L_{A,b}u rho dx = int_D L_{G,h}u dx + int_{dD} <A grad u, nu> d eta,

with L_{S,T}u = tr(S D^2 u) + <T, grad u>.  The interior identity drops the
boundary term and uses test functions compactly supported inside D.
"""
import csv
import json
from dataclasses import dataclass, field as dc_field

import numpy as np
import sympy

from .fields import SYMBOLS
from .geometry import Domain, as_points
from .measures import pair_with_test
from .quadrature import disk_rule, domain_rule, gauss_legendre, mesh_rule, p1_at_rule


class TestFunction:
    """Closed-form test function with exact gradient and Hessian.

    If ``support = (center, r)`` the expression is used inside the ball and
    the function is zero outside (the expression must vanish to second order
    on the sphere of radius r).
    """

    __test__ = False  # keep pytest from collecting this class

    def __init__(self, expr, dim, name, normal_derivative_one=False, support=None):
        xs = SYMBOLS[:dim]
        self.expr, self.dim, self.name = expr, dim, name
        self.normal_derivative_one = normal_derivative_one
        self.support = support
        grad = [sympy.diff(expr, v) for v in xs]
        hess = [[sympy.diff(g, v) for v in xs] for g in grad]
        self._u = sympy.lambdify(xs, expr, "numpy")
        self._g = [sympy.lambdify(xs, g, "numpy") for g in grad]
        self._h = [[sympy.lambdify(xs, e, "numpy") for e in row] for row in hess]

    def _mask(self, x):
        if self.support is None:
            return np.ones(len(x), bool)
        c, r = self.support
        return np.sum((x - np.asarray(c)) ** 2, axis=1) < r * r

    def _ev(self, fn, x):
        return np.broadcast_to(np.asarray(fn(*x.T), float), (len(x),))

    def __call__(self, x):
        x = as_points(x, self.dim)
        return np.where(self._mask(x), self._ev(self._u, x), 0.0)

    def grad(self, x):
        x = as_points(x, self.dim)
        g = np.stack([self._ev(f, x) for f in self._g], axis=1)
        return g * self._mask(x)[:, None]

    def hess(self, x):
        x = as_points(x, self.dim)
        H = np.stack([np.stack([self._ev(f, x) for f in row], axis=1) for row in self._h], axis=1)
        return H * self._mask(x)[:, None, None]

    def __repr__(self):
        return f"TestFunction({self.name}: {self.expr})"


def _monomials(dim, degree):
    if dim == 1:
        return [(k,) for k in range(degree + 1)]
    return [(i, t - i) for t in range(degree + 1) for i in range(t, -1, -1)]


def test_bank(domain, degree=4):
    """Polynomial-times-bubble test functions vanishing on the boundary.

    Disk: (1 - |y|^2) y^a for all monomials |a| <= degree in the scaled
    variable y = (x - c)/R, plus phi = (|x - c|^2 - R^2)/(2R), which has unit
    outward normal derivative.  Interval: (t/L)(1 - t/L)(t/L)^k with
    t = x - alpha, plus two one-sided functions phi_alpha, phi_beta with unit
    outward normal derivative at one endpoint and zero slope at the other.
    """
    if not 0 <= degree <= 6:
        raise ValueError(f"bank degree must be in 0..6 (got {degree})")
    bank = []
    if domain.kind == "disk":
        c, R = np.asarray(domain.center, float), domain.radius
        x1, x2 = SYMBOLS
        y1, y2 = (x1 - float(c[0])) / R, (x2 - float(c[1])) / R
        bub = 1 - y1**2 - y2**2
        for a in _monomials(2, degree):
            bank.append(TestFunction(sympy.expand(bub * y1**a[0] * y2**a[1]), 2, f"bubble_{a[0]}{a[1]}"))
        phi = ((x1 - float(c[0])) ** 2 + (x2 - float(c[1])) ** 2 - R * R) / (2 * R)
        bank.append(TestFunction(phi, 2, "phi", normal_derivative_one=True))
        return bank
    (x1,) = SYMBOLS[:1]
    L = domain.beta - domain.alpha
    t = x1 - domain.alpha
    for k in range(degree + 1):
        bank.append(TestFunction(sympy.expand((t / L) * (1 - t / L) * (t / L) ** k), 1, f"bubble_{k}"))
    bank.append(TestFunction(sympy.expand(-t * (L - t) ** 2 / L**2), 1, "phi_alpha"))
    bank.append(TestFunction(sympy.expand(t**2 * (t - L) / L**2), 1, "phi_beta"))
    return bank


def interior_bank(domain, degree=2, shrink=0.9, power=4):
    """Test functions supported in the concentric ball of radius shrink*R:
    (1 - |y|^2)^power y^a, y = (x - c)/(shrink R)."""
    if domain.kind == "disk":
        c, r = np.asarray(domain.center, float), shrink * domain.radius
        x1, x2 = SYMBOLS
        y1, y2 = (x1 - float(c[0])) / r, (x2 - float(c[1])) / r
        bub = (1 - y1**2 - y2**2) ** power
        return [TestFunction(bub * y1**a[0] * y2**a[1], 2, f"interior_{a[0]}{a[1]}",
                             support=(c, r)) for a in _monomials(2, degree)]
    (x1,) = SYMBOLS[:1]
    m = 0.5 * (domain.alpha + domain.beta)
    r = shrink * 0.5 * (domain.beta - domain.alpha)
    y = (x1 - m) / r
    return [TestFunction((1 - y**2) ** power * y**k, 1, f"interior_{k}", support=(np.array([m]), r))
            for k in range(degree + 1)]


def apply_operator(S, T, u, x):
    """L_{S,T}u(x) = tr(S D^2u) + <T, grad u> with S, T arrays at x."""
    return np.einsum("nij,nij->n", S, u.hess(x)) + np.einsum("ni,ni->n", T, u.grad(x))


def volume_rule(rho, domain, order=6, rule=None):
    """Quadrature points, weights and rho values over D.

    A SolutionField (anything with ``mesh`` and ``values``) is integrated cell
    by cell with a degree-``order`` simplex rule; a callable rho uses the
    polar/composite domain rule.
    """
    if hasattr(rho, "mesh") and hasattr(rho, "values"):
        x, w, bary, cells = mesh_rule(rho.mesh, order)
        return x, w, p1_at_rule(rho.values, bary, cells)
    if rule is None:
        if domain.kind == "disk":
            rule = domain_rule(domain, n_radial=8 * order, n_angular=24 * order)
        else:
            rule = _interval_rule(domain, order)
    x, w = rule
    return x, w, np.asarray(rho(x), float).reshape(len(x))


def _interval_rule(domain, order, panels=256):
    edges = np.linspace(domain.alpha, domain.beta, panels + 1)
    t, wt = gauss_legendre(order, 0.0, 1.0)
    hh = np.diff(edges)
    x = (edges[:-1, None] + hh[:, None] * t).ravel()
    return x[:, None], (hh[:, None] * wt).ravel()


@dataclass
class ResidualReport:
    rows: list = dc_field(default_factory=list)

    @property
    def relative(self):
        return np.array([r["relative"] for r in self.rows])

    @property
    def max_relative(self):
        return float(self.relative.max()) if self.rows else 0.0

    @property
    def median_relative(self):
        return float(np.median(self.relative)) if self.rows else 0.0

    @property
    def max_abs(self):
        return float(max(abs(r["residual"]) for r in self.rows)) if self.rows else 0.0

    def worst(self):
        return max(self.rows, key=lambda r: r["relative"])

    def to_dict(self):
        return {"functions": self.rows, "max_relative": self.max_relative,
                "median_relative": self.median_relative, "max_abs": self.max_abs}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["function", "residual", "relative"])
            for r in self.rows:
                w.writerow([r["name"], repr(r["residual"]), repr(r["relative"])])


def _report(names, lhs, vol, bnd):
    lhs, vol, bnd = map(np.asarray, (lhs, vol, bnd))
    res = lhs - vol - bnd
    den = np.abs(lhs) + np.abs(vol) + np.abs(bnd)
    # floor guards against accidental cancellation in a single bank member
    floor = 1e-3 * den.max() if den.size and den.max() > 0 else 0.0
    den = np.maximum(den, floor)
    rel = np.where(den > 0, np.abs(res) / np.where(den > 0, den, 1.0), 0.0)
    rows = [{"name": n, "lhs": float(a), "rhs_volume": float(b), "boundary": float(c),
             "residual": float(r), "relative": float(q)}
            for n, a, b, c, r, q in zip(names, lhs, vol, bnd, res, rel)]
    return ResidualReport(rows)


def _support_rule(u, order):
    """Polar (or panel) rule on the support ball of ``u``, None if global."""
    if u.support is None:
        return None
    c, r = u.support
    if len(c) == 2:
        return disk_rule(c, r, n_radial=8 * order, n_angular=24 * order)
    return _interval_rule(Domain("interval", alpha=c[0] - r, beta=c[0] + r), order)


def _support_key(u):
    return None if u.support is None else (tuple(np.asarray(u.support[0], float)), float(u.support[1]))


def _volume_terms(rho, coeffs, domain, bank, order):
    # members sharing a support share one rule; compactly supported members
    # are integrated on their own ball so the rule never straddles its edge
    lhs, vol = np.zeros(len(bank)), np.zeros(len(bank))
    groups = {}
    for k, u in enumerate(bank):
        groups.setdefault(_support_key(u), []).append(k)
    for idx in groups.values():
        x, w, rv = volume_rule(rho, domain, order, _support_rule(bank[idx[0]], order))
        A, b, G, h = coeffs.A(x), coeffs.b(x), coeffs.G(x), coeffs.h(x)
        for k in idx:
            lhs[k] = np.sum(w * apply_operator(A, b, bank[k], x) * rv)
            vol[k] = np.sum(w * apply_operator(G, h, bank[k], x))
    return lhs.tolist(), vol.tolist()


def interior_residual(rho, coeffs, domain, bank=None, order=6):
    """int L_{A,b}u rho - int L_{G,h}u over compactly supported test functions."""
    bank = interior_bank(domain) if bank is None else bank
    lhs, vol = _volume_terms(rho, coeffs, domain, bank, order)
    return _report([u.name for u in bank], lhs, vol, np.zeros(len(bank)))


def dirichlet_residual(rho, coeffs, domain, eta, bank=None, order=6):
    """Residual of the Dirichlet identity for each test function in ``bank``."""
    bank = test_bank(domain) if bank is None else bank
    lhs, vol = _volume_terms(rho, coeffs, domain, bank, order)
    bnd = [pair_with_test(eta, coeffs.A, u) for u in bank]
    return _report([u.name for u in bank], lhs, vol, bnd)
