"""Reference solutions of the 1D Dirichlet problem.

In one dimension (rho A)'' - (rho b)' = G'' - h' integrates once to
w' = (b/A)(w + G) - h + c1 for w = rho A - G.  The boundary condition
rho = eta + G/A at the endpoints becomes w(alpha) = A(alpha) eta_alpha and
w(beta) = A(beta) eta_beta, and c1 is fixed by shooting (the map c1 -> w(beta)
is affine).
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import EllipticityError
from .fields import CallableField, CoefficientSet, ExprField, as_field
from .measures import BoundaryMeasure


@dataclass
class Oracle1DSolution:
    x: np.ndarray
    rho: np.ndarray
    w: np.ndarray
    c1: float
    eta_alpha: float
    eta_beta: float
    kappa_alpha: float
    kappa_beta: float
    coeffs: object
    _spline: object = None

    def __call__(self, x):
        x = np.asarray(x, float).reshape(-1)
        A = self.coeffs.A(x)[:, 0, 0]
        G = self.coeffs.G(x)[:, 0, 0]
        return (self._spline(x) + G) / A

    def eta(self, domain):
        return BoundaryMeasure.endpoints(domain, self.eta_alpha, self.eta_beta)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["x1", "rho"])
            wr.writerows([[repr(float(a)), repr(float(b))] for a, b in zip(self.x, self.rho)])


def _scalars(coeffs, x):
    X = x[:, None]
    return (coeffs.A(X)[:, 0, 0], coeffs.b(X)[:, 0], coeffs.G(X)[:, 0, 0], coeffs.h(X)[:, 0])


def exact_solve_1d(coeffs, domain, eta_alpha, eta_beta, steps=20000):
    """RK4 shooting solution of the 1D problem with endpoint atoms."""
    if steps < 10**4:
        raise ValueError("use at least 10^4 RK4 steps")
    a, b_ = domain.alpha, domain.beta
    x = np.linspace(a, b_, steps + 1)
    hstep = x[1] - x[0]
    xm = x[:-1] + 0.5 * hstep
    A, B, G, H = _scalars(coeffs, x)
    Am, Bm, Gm, Hm = _scalars(coeffs, xm)
    if np.any(A <= 0) or np.any(Am <= 0):
        raise EllipticityError("A vanishes or is negative on the interval",
                               witness=x[np.argmin(A)])

    def integrate(w0, c1):
        w = np.empty(steps + 1)
        w[0] = w0
        for i in range(steps):
            k1 = B[i] / A[i] * (w[i] + G[i]) - H[i] + c1
            y = w[i] + 0.5 * hstep * k1
            k2 = Bm[i] / Am[i] * (y + Gm[i]) - Hm[i] + c1
            y = w[i] + 0.5 * hstep * k2
            k3 = Bm[i] / Am[i] * (y + Gm[i]) - Hm[i] + c1
            y = w[i] + hstep * k3
            k4 = B[i + 1] / A[i + 1] * (y + G[i + 1]) - H[i + 1] + c1
            w[i + 1] = w[i] + hstep / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return w

    wa, wb = A[0] * eta_alpha, A[-1] * eta_beta
    w0 = integrate(wa, 0.0)
    w1 = integrate(wa, 1.0)
    slope = w1[-1] - w0[-1]
    assert slope != 0, "shooting map is degenerate"
    c1 = (wb - w0[-1]) / slope
    w = w0 + c1 * (w1 - w0)
    w[-1] = wb  # exact by construction up to rounding
    dw = B / A * (w + G) - H + c1
    sol = Oracle1DSolution(x, (w + G) / A, w, float(c1), float(eta_alpha), float(eta_beta),
                           float(G[0] / A[0]), float(G[-1] / A[-1]), coeffs)
    sol._spline = CubicHermiteSpline(x, w, dw)
    return sol


def reciprocal_example(rho_target, domain, samples=20001):
    """Coefficients A = 1/rho_target, b = G = h = 0 on an interval.

    rho_target may be an expression string, an ExprField or a vectorised
    callable; it must stay within positive bounds m <= rho <= M.
    """
    if isinstance(rho_target, (str, int, float)):
        rho_target = as_field(rho_target, (), 1)
    x = np.linspace(domain.alpha, domain.beta, samples)[:, None]
    vals = np.asarray(rho_target(x), float).reshape(-1)
    if not np.all(np.isfinite(vals)) or vals.min() <= 0:
        raise ValueError("rho_target must be bounded below by a positive constant")
    if isinstance(rho_target, ExprField):
        A = ExprField([[1 / rho_target.exprs.reshape(-1)[0]]], 1, (1, 1))
    else:
        A = CallableField(lambda y: 1.0 / np.asarray(rho_target(y), float).reshape(-1, 1, 1),
                          (1, 1), 1)
    return CoefficientSet.build(1, A=A)


def step_function(x0, left, right):
    """Vectorised step: ``left`` for x < x0, ``right`` otherwise."""
    def f(x):
        x = np.asarray(x, float).reshape(len(x), -1)[:, 0]
        return np.where(x < x0, left, right)
    return f
