"""Mollifiers and admissible approximations of the coefficients.

Level-n coefficients are a^{ij}_n = a^{ij} * psi_{1/n} with a extended by the
identity outside Omega, and b_n = (b 1_{Omega_n}) * psi_{1/n}, likewise for G
and h.  Convolutions are evaluated at arbitrary points by a symmetric polar
quadrature on the kernel support; derivatives come from convolving with the
analytic kernel gradient.
"""
import csv
import hashlib
import json
import os
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import quad

from .errors import GeometryError, ResolutionError
from .fields import CoefficientSet, ExprField, Field, GridField, lq_of_values
from .geometry import as_points, inner_cutoff
from .quadrature import domain_rule, unit_ball_rule

KINDS = ("standard_bump", "polynomial_bump")


_EDGE = 1.0 - 8 * np.finfo(float).eps  # |x| >= eps up to rounding counts as outside


def _profile(kind, r2):
    out = np.zeros_like(r2)
    m = r2 < _EDGE
    if kind == "standard_bump":
        out[m] = np.exp(-1.0 / (1.0 - r2[m]))
    else:
        out[m] = (1.0 - r2[m]) ** 4
    return out


def _profile_deriv(kind, r2):
    """d profile / d(r^2)."""
    out = np.zeros_like(r2)
    m = r2 < _EDGE
    if kind == "standard_bump":
        t = 1.0 - r2[m]
        out[m] = -np.exp(-1.0 / t) / t**2
    else:
        out[m] = -4.0 * (1.0 - r2[m]) ** 3
    return out


class Mollifier:
    """psi_eps(x) = eps^-d psi(x/eps) with psi radial, supported in the unit ball."""

    def __init__(self, kind, eps, dim=2):
        if kind not in KINDS:
            raise ValueError(f"unknown mollifier kind {kind!r}; expected one of {KINDS}")
        if not eps > 0:
            raise ValueError(f"mollifier width must be positive, got {eps}")
        self.kind, self.eps, self.dim = kind, float(eps), dim
        sphere = 2.0 if dim == 1 else 2 * np.pi
        radial, _ = quad(lambda r: _profile(kind, np.array([r * r]))[0] * r ** (dim - 1), 0, 1,
                         epsabs=1e-15, epsrel=1e-13, limit=200)
        self.norm = sphere * radial
        self._rules = {}

    def __call__(self, x):
        x = as_points(x, self.dim) / self.eps
        return _profile(self.kind, np.sum(x * x, axis=1)) / (self.norm * self.eps**self.dim)

    def grad(self, x):
        x = as_points(x, self.dim) / self.eps
        d = _profile_deriv(self.kind, np.sum(x * x, axis=1))
        return 2 * x * d[:, None] / (self.norm * self.eps ** (self.dim + 1))

    def rule(self, n_radial=8, n_angular=16):
        """Nodes z_q in the unit ball, mass weights W_q (sum 1) and gradient
        weights D_q with -sum D_qj z_qk = delta_jk, so constants and affine
        functions are reproduced exactly by the discrete convolution."""
        key = (n_radial, n_angular)
        if key not in self._rules:
            z, w = unit_ball_rule(self.dim, n_radial, n_angular)
            r2 = np.sum(z * z, axis=1)
            W = w * _profile(self.kind, r2)
            W /= W.sum()
            D = w[:, None] * 2 * z * _profile_deriv(self.kind, r2)[:, None]
            D /= -np.sum(D * z, axis=0)  # per-axis moment normalisation
            self._rules[key] = (z, W, D)
        return self._rules[key]


def make_mollifier(kind, eps, dim=2):
    return Mollifier(kind, eps, dim)


def _extended(f, omega, fill, cutoff=None):
    """f inside Omega (or Omega_n), ``fill`` outside; f is only evaluated inside."""
    def g(y):
        inside = omega.distance_to_boundary(y) > 0
        if cutoff is not None:
            inside &= cutoff(y) > 0
        out = np.broadcast_to(np.asarray(fill, float), (len(y),) + f.shape).copy()
        if inside.any():
            out[inside] = f(y[inside])
        return out
    return g


class MollifiedField(Field):
    """(f_ext * psi_eps)(x) evaluated by the kernel quadrature rule."""

    chunk = 200_000  # samples per batch

    def __init__(self, f, moll, extend, n_radial=8, n_angular=16):
        super().__init__(f.shape, f.dim)
        self.base, self.moll, self.extend = f, moll, extend
        self.z, self.W, self.D = moll.rule(n_radial, n_angular)

    def _samples(self, x):
        q = len(self.W)
        y = (x[:, None, :] - self.moll.eps * self.z[None, :, :]).reshape(-1, self.dim)
        return self.extend(y).reshape((len(x), q) + self.shape)

    def _batches(self, x):
        step = max(1, self.chunk // len(self.W))
        for i in range(0, len(x), step):
            yield slice(i, i + step), self._samples(x[i:i + step])

    def _eval(self, x):
        out = np.empty((len(x),) + self.shape)
        for sl, s in self._batches(x):
            out[sl] = np.tensordot(self.W, s, axes=(0, 1))
        return out

    def value_and_grad(self, x):
        """Values and kernel-derivative gradients, last axis = derivative index."""
        x = as_points(x, self.dim)
        val = np.empty((len(x),) + self.shape)
        grad = np.empty((len(x),) + self.shape + (self.dim,))
        for sl, s in self._batches(x):
            val[sl] = np.tensordot(self.W, s, axes=(0, 1))
            grad[sl] = np.moveaxis(np.tensordot(self.D, s, axes=(0, 1)), 0, -1) / self.moll.eps
        if len(self.shape) == 2:
            val = 0.5 * (val + np.swapaxes(val, 1, 2))
            grad = 0.5 * (grad + np.swapaxes(grad, 1, 2))
        return val, grad

    def grad(self, x):
        return self.value_and_grad(x)[1]


def convolve(f, moll, axes, omega=None, fill=0.0, cutoff=None):
    """Convolve ``f`` (extended by ``fill`` outside Omega / the cutoff) with
    ``moll`` at the nodes of the tensor grid ``axes``.

    Returns (GridField of values, GridField of gradients).  The grid spacing
    must resolve the kernel: spacing <= eps/4.
    """
    axes = tuple(np.asarray(a, float) for a in axes)
    hmax = max(np.max(np.diff(a)) for a in axes)
    if hmax > moll.eps / 4 * (1 + 1e-12):
        raise ResolutionError(f"grid spacing {hmax:.3g} does not resolve eps={moll.eps:.3g} "
                              "(need spacing <= eps/4)")
    ext = f if omega is None else _extended(f, omega, fill, cutoff)
    mf = MollifiedField(f, moll, ext)
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    val, grad = mf.value_and_grad(X)
    gshape = tuple(len(a) for a in axes)
    return (GridField(axes, val.reshape(gshape + f.shape), f.shape),
            GridField(axes, grad.reshape(gshape + f.shape + (len(axes),)), f.shape + (len(axes),)))


def convolve_points(f, moll, x, n_radial=16, n_angular=32):
    """Direct quadrature of (f * psi_eps)(x) at arbitrary points."""
    return MollifiedField(f, moll, f, n_radial, n_angular)(x)


class _DivField(Field):
    """Row divergence of a mollified matrix field, sum_j d_j m^{ij}."""

    def __init__(self, mf):
        super().__init__((mf.dim,), mf.dim)
        self.mf = mf

    def _eval(self, x):
        g = self.mf.grad(x)
        return np.einsum("nijj->ni", g)


class Level:
    """Common interface of coefficient levels used by the solver.

    ``fields(x)`` returns a dict with A, b, G, h, divA, divG evaluated at x.
    """

    def fields(self, x):
        raise NotImplementedError

    def coefficient_set(self):
        return CoefficientSet(self.A, self.b, self.G, self.h, self.dim)


class ExactLevel(Level):
    """Closed-form coefficients used without mollification."""

    def __init__(self, coeffs):
        if not coeffs.closed_form:
            raise TypeError("ExactLevel needs closed-form coefficients")
        self.dim, self.n, self.eps = coeffs.dim, None, None
        self.A, self.b, self.G, self.h = coeffs.A, coeffs.b, coeffs.G, coeffs.h
        self.divA = coeffs.A.divergence()
        self.divG = coeffs.G.divergence()
        self.distances = {}

    def fields(self, x):
        return {k: getattr(self, k)(x) for k in ("A", "b", "G", "h", "divA", "divG")}


@dataclass
class AdmissibleLevel(Level):
    n: int
    eps: float
    kind: str
    A: MollifiedField
    b: MollifiedField
    G: MollifiedField
    h: MollifiedField
    omega: object
    cutoff: object
    dim: int
    distances: dict = dc_field(default_factory=dict)

    @property
    def divA(self):
        return _DivField(self.A)

    @property
    def divG(self):
        return _DivField(self.G)

    def fields(self, x):
        x = as_points(x, self.dim)
        A, dA = self.A.value_and_grad(x)
        G, dG = self.G.value_and_grad(x)
        return {"A": A, "b": self.b(x), "G": G, "h": self.h(x),
                "divA": np.einsum("nijj->ni", dA), "divG": np.einsum("nijj->ni", dG)}

    def to_grid(self, domain, spacing=None):
        """Materialise the level on a tensor grid (spacing <= eps/4) over the
        closure of ``domain`` plus a margin of 2 spacings."""
        spacing = self.eps / 4 if spacing is None else spacing
        if spacing > self.eps / 4 * (1 + 1e-12):
            raise ResolutionError("grid spacing must be <= eps/4")
        if domain.kind == "interval":
            lo, hi = [domain.alpha], [domain.beta]
        else:
            c = np.asarray(domain.center)
            lo, hi = c - domain.radius, c + domain.radius
        axes = []
        for a, b in zip(lo, hi):
            m = int(np.ceil((b - a + 4 * spacing) / spacing))
            axes.append(a - 2 * spacing + spacing * np.arange(m + 1))
        return GridLevel.from_level(self, tuple(axes))


class GridLevel(Level):
    """A level stored as piecewise-linear grid fields (cache / export form)."""

    def __init__(self, axes, grids, n, eps, kind, dim):
        self.axes, self.grids = axes, grids
        self.n, self.eps, self.kind, self.dim = n, eps, kind, dim
        d = dim
        shapes = {"A": (d, d), "b": (d,), "G": (d, d), "h": (d,), "divA": (d,), "divG": (d,)}
        for k, s in shapes.items():
            setattr(self, k, GridField(axes, grids[k], s))
        self.distances = {}

    @classmethod
    def from_level(cls, level, axes):
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        gshape = tuple(len(a) for a in axes)
        f = level.fields(X)
        grids = {k: v.reshape(gshape + v.shape[1:]) for k, v in f.items()}
        return cls(axes, grids, level.n, level.eps, getattr(level, "kind", ""), level.dim)

    def fields(self, x):
        return {k: getattr(self, k)(x) for k in ("A", "b", "G", "h", "divA", "divG")}

    def save_csv(self, path):
        d = self.dim
        X = np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1).reshape(-1, d)
        cols, names = [X], [f"x{k + 1}" for k in range(d)]
        for k in ("A", "b", "G", "h", "divA", "divG"):
            v = self.grids[k].reshape(len(X), -1)
            cols.append(v)
            names += [f"{k}_{j}" for j in range(v.shape[1])]
        data = np.hstack(cols)
        tmp = path + ".tmp"
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# n", self.n, "eps", repr(self.eps), "kind", self.kind])
            w.writerow(names)
            w.writerows([[repr(float(v)) for v in row] for row in data])
        os.replace(tmp, path)

    @classmethod
    def load_csv(cls, path):
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            meta = next(r)
            names = next(r)
            data = np.array([[float(v) for v in row] for row in r])
        d = sum(1 for c in names if c in ("x1", "x2"))
        axes = tuple(np.unique(data[:, k]) for k in range(d))
        gshape = tuple(len(a) for a in axes)
        grids, col = {}, d
        sizes = {"A": d * d, "b": d, "G": d * d, "h": d, "divA": d, "divG": d}
        shapes = {"A": (d, d), "b": (d,), "G": (d, d), "h": (d,), "divA": (d,), "divG": (d,)}
        for k in ("A", "b", "G", "h", "divA", "divG"):
            grids[k] = data[:, col:col + sizes[k]].reshape(gshape + shapes[k])
            col += sizes[k]
        return cls(axes, grids, int(meta[1]), float(meta[3]), meta[5], d)


def coefficient_distances(level, coeffs, domain, p):
    """||A_n - A||_inf, ||b_n - b||_Lp, ||G_n - G||_Lp', ||h_n - h||_L1 on the domain."""
    x, w = domain_rule(domain, n_radial=16, n_angular=48, panels=32)
    f = level.fields(x)
    diff = {k: f[k] - getattr(coeffs, k)(x) for k in ("A", "b", "G", "h")}
    return {"A_inf": lq_of_values(diff["A"], w, np.inf, "spectral"),
            "b_Lp": lq_of_values(diff["b"], w, p),
            "G_Lpconj": lq_of_values(diff["G"], w, p / (p - 1)),
            "h_L1": lq_of_values(diff["h"], w, 1.0)}


def admissible_sequence(coeffs, domain, n, kind="standard_bump", p=None,
                        n_radial=8, n_angular=16, record=True):
    """Level-n admissible approximation with eps = 1/n.

    ``domain`` is D and must carry its container Omega; the cutoff Omega_n must
    not reach D, i.e. 1/n < gap.
    """
    omega = domain.container
    if omega is None:
        raise GeometryError("admissible_sequence needs D with an enclosing container Omega")
    if n < 1:
        raise ValueError("level index n must be >= 1")
    eps = 1.0 / n
    if not eps < domain.gap:
        raise GeometryError(f"cutoff would touch D: 1/n = {eps:.4g} >= gap delta = {domain.gap:.4g}")
    d = coeffs.dim
    moll = Mollifier(kind, eps, d)
    cut = inner_cutoff(omega, n)
    mk = lambda f, fill, c: MollifiedField(  # noqa: E731
        f, moll, _extended(f, omega, fill, c), n_radial, n_angular)
    level = AdmissibleLevel(n, eps, kind,
                            mk(coeffs.A, np.eye(d), None), mk(coeffs.b, 0.0, cut),
                            mk(coeffs.G, 0.0, cut), mk(coeffs.h, 0.0, cut),
                            omega, cut, d)
    if record:
        p = p if p is not None else (4.0 if d == 2 else 2.5)
        level.distances = coefficient_distances(level, coeffs, domain, p)
    return level


def problem_hash(payload):
    """Stable short hash of a JSON-serialisable problem description."""
    s = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(s.encode()).hexdigest()[:16]


def cached_level(cache_dir, key, n, build, domain):
    """Load level n from ``cache_dir`` or build, materialise and store it."""
    path = os.path.join(cache_dir, f"level_{key}_{n}.csv")
    if os.path.exists(path):
        return GridLevel.load_csv(path)
    lvl = build()
    g = lvl.to_grid(domain)
    g.distances = lvl.distances
    os.makedirs(cache_dir, exist_ok=True)
    g.save_csv(path)
    return g


def is_constant_set(coeffs):
    return all(isinstance(f, ExprField) and f.is_constant
               for f in (coeffs.A, coeffs.b, coeffs.G, coeffs.h))
