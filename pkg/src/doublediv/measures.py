"""Signed measures on the boundary of an interval or a disk.

A measure is a finite list of atoms plus a density with respect to surface
measure.  On a circle of radius R the density is piecewise linear and periodic
in the angle, sampled at equispaced angles 2 pi k / m.  In 1D the boundary is
{alpha, beta} with sigma the counting measure, so every measure is a pair of
atoms and there is no separate density part.
"""
from dataclasses import dataclass

import numpy as np

from .errors import EllipticityError
from .mollify import Mollifier

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class BoundaryMeasure:
    domain: object
    atom_params: np.ndarray   # angles in [0, 2pi) or endpoint coordinates
    atom_weights: np.ndarray
    density: "np.ndarray | None" = None  # values at angles 2 pi k / m

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.atom_params, float))
        w = np.atleast_1d(np.asarray(self.atom_weights, float))
        if s.shape != w.shape:
            raise ValueError("atom parameters and weights differ in length")
        if self.domain.kind == "interval":
            snapped = np.where(np.isclose(s, self.domain.alpha, atol=1e-12 * self.domain.diameter),
                               self.domain.alpha,
                               np.where(np.isclose(s, self.domain.beta,
                                                   atol=1e-12 * self.domain.diameter),
                                        self.domain.beta, np.nan))
            if np.isnan(snapped).any():
                raise ValueError("1D atoms must sit at the interval endpoints")
            if self.density is not None:
                raise ValueError("1D measures have no density part; use endpoint atoms")
            s = snapped
        else:
            s = np.mod(s, TWO_PI)
        object.__setattr__(self, "atom_params", s)
        object.__setattr__(self, "atom_weights", w)
        if self.density is not None:
            d = np.asarray(self.density, float)
            if d.ndim != 1 or len(d) < 2:
                raise ValueError("density needs at least two samples")
            object.__setattr__(self, "density", d)

    # construction helpers
    @classmethod
    def zero(cls, domain):
        return cls(domain, np.zeros(0), np.zeros(0))

    @classmethod
    def atoms(cls, domain, params, weights):
        return cls(domain, params, weights)

    @classmethod
    def endpoints(cls, domain, eta_alpha, eta_beta):
        return cls(domain, [domain.alpha, domain.beta], [eta_alpha, eta_beta])

    @classmethod
    def from_density(cls, domain, values):
        return cls(domain, np.zeros(0), np.zeros(0), np.asarray(values, float))

    @classmethod
    def from_function(cls, domain, f, m=256):
        """Density part sampled from f(x) at m equispaced boundary nodes."""
        s = TWO_PI * np.arange(m) / m
        return cls.from_density(domain, np.asarray(f(domain.boundary_point(s)), float))

    @property
    def radius(self):
        return self.domain.radius

    @property
    def has_atoms(self):
        return bool(np.any(self.atom_weights != 0))

    def density_at(self, s):
        """Periodic PL interpolation of the density at angles s (0 if none)."""
        s = np.asarray(s, float)
        if self.density is None:
            return np.zeros_like(s)
        m = len(self.density)
        t = np.mod(s, TWO_PI) * m / TWO_PI
        i = np.floor(t).astype(int) % m
        f = t - np.floor(t)
        return (1 - f) * self.density[i] + f * self.density[(i + 1) % m]

    def total_variation(self):
        tv = float(np.sum(np.abs(self.atom_weights)))
        if self.density is None:
            return tv
        a = self.density
        b = np.roll(a, -1)
        seg = TWO_PI * self.radius / len(a)
        same = a * b >= 0
        part = np.where(same, 0.5 * (np.abs(a) + np.abs(b)),
                        0.5 * (a * a + b * b) / np.where(same, 1.0, np.abs(a) + np.abs(b)))
        return tv + float(seg * part.sum())

    def mass(self):
        m = float(np.sum(self.atom_weights))
        if self.density is not None:
            m += float(np.sum(self.density)) * TWO_PI * self.radius / len(self.density)
        return m

    def _fine(self, refine=8):
        """Fine periodic trapezoid nodes (angles, sigma-weights) for the density."""
        m = len(self.density) * refine
        s = TWO_PI * np.arange(m) / m
        return s, np.full(m, TWO_PI * self.radius / m)

    def integrate(self, f, refine=8):
        """int f d eta for f evaluated at boundary points (N, d) -> (N,)."""
        dom = self.domain
        out = 0.0
        if len(self.atom_weights):
            x = dom.boundary_point(self.atom_params)
            out += float(np.sum(self.atom_weights * f(x)))
        if self.density is not None:
            s, w = self._fine(refine)
            out += float(np.sum(w * self.density_at(s) * f(dom.boundary_point(s))))
        return out

    def fourier(self, kmax):
        """Exact (cos, sin) moments int cos(k s) d eta, int sin(k s) d eta, k=0..kmax."""
        k = np.arange(kmax + 1)
        c = np.cos(np.outer(k, self.atom_params)) @ self.atom_weights
        s = np.sin(np.outer(k, self.atom_params)) @ self.atom_weights
        if self.density is not None:
            m = len(self.density)
            h = TWO_PI / m
            th = h * np.arange(m)
            sinc = np.sinc(k * h / (2 * np.pi)) ** 2  # np.sinc(x) = sin(pi x)/(pi x)
            c = c + self.radius * h * sinc * (np.cos(np.outer(k, th)) @ self.density)
            s = s + self.radius * h * sinc * (np.sin(np.outer(k, th)) @ self.density)
        return c, s

    def scaled(self, lam):
        d = None if self.density is None else lam * self.density
        return BoundaryMeasure(self.domain, self.atom_params, lam * self.atom_weights, d)

    def __add__(self, other):
        d = None
        if self.density is not None or other.density is not None:
            m = max(len(x.density) for x in (self, other) if x.density is not None)
            s = TWO_PI * np.arange(m) / m
            d = self.density_at(s) + other.density_at(s)
        return BoundaryMeasure(self.domain, np.concatenate([self.atom_params, other.atom_params]),
                               np.concatenate([self.atom_weights, other.atom_weights]), d)

    def to_dict(self):
        return {"atoms": [[float(a), float(b)] for a, b in zip(self.atom_params, self.atom_weights)],
                "density": None if self.density is None else [float(v) for v in self.density]}


@dataclass(frozen=True)
class KappaDensity:
    values: np.ndarray
    grid: object


def kappa_values(A, G, x, nu):
    """<G nu, nu> / <A nu, nu> at points x with unit normals nu."""
    a = np.einsum("ni,nij,nj->n", nu, A(x), nu)
    g = np.einsum("ni,nij,nj->n", nu, G(x), nu)
    if np.any(a <= 0):
        k = int(np.argmax(a <= 0))
        raise EllipticityError(f"<A nu, nu> = {a[k]:.3g} <= 0 at boundary point {x[k].tolist()}",
                               witness=x[k])
    return g / a


def kappa(A, G, boundary):
    return KappaDensity(kappa_values(A, G, boundary.nodes, boundary.normals), boundary)


def total_variation(eta):
    return eta.total_variation()


def _arc_kernel(kind, eps, R, s):
    """1D mollifier of arc-length width eps evaluated at angle offsets s (periodic)."""
    d = np.mod(s + np.pi, TWO_PI) - np.pi
    return Mollifier(kind, eps, 1)(R * d)


def mollify_measure(eta, eps, kind="standard_bump", m=None):
    """Smooth density eta_eps on the circle: atoms become bumps of arc-length
    width eps and the density part is convolved periodically.

    The output grid has m nodes (default: the smallest power of two >= 64
    giving spacing <= eps/8).  It depends on eps and R only, so the map
    eta -> eta_eps is linear; power-of-two density grids are resampled exactly.  Each bump is normalised on that grid,
    so the signed mass is conserved to rounding.  In 1D the measure is returned
    unchanged (endpoint atoms are already of the required form).
    """
    dom = eta.domain
    if dom.kind == "interval":
        return eta
    if not eps > 0:
        raise ValueError("eps must be positive")
    R = dom.radius
    if eps >= np.pi * R:
        raise ValueError(f"eps = {eps} >= pi R: the kernel would wrap around the circle")
    if m is None:
        need = int(np.ceil(8 * TWO_PI * R / eps))
        m = 1 << int(np.ceil(np.log2(max(need, 64))))
    s = TWO_PI * np.arange(m) / m
    dsig = TWO_PI * R / m
    out = np.zeros(m)
    for a, w in zip(eta.atom_params, eta.atom_weights):
        k = _arc_kernel(kind, eps, R, s - a)
        tot = k.sum() * dsig
        if tot == 0:  # bump narrower than the grid; put it on the nearest node
            k = np.zeros(m)
            k[int(np.round(a / TWO_PI * m)) % m] = 1.0
            tot = dsig
        out += w * k / tot
    if eta.density is not None:
        k = _arc_kernel(kind, eps, R, s)
        k /= k.sum()
        f = eta.density_at(s)
        # circular convolution, deterministic direct sum over the kernel support
        nz = np.flatnonzero(k)
        for j in nz:
            out += k[j] * np.roll(f, j)
    return BoundaryMeasure(dom, np.zeros(0), np.zeros(0), out)


def _bl_1d(eta1, eta2):
    dom = eta1.domain
    L = dom.beta - dom.alpha
    a = sum(w for s, w in zip(eta1.atom_params, eta1.atom_weights) if s == dom.alpha) - \
        sum(w for s, w in zip(eta2.atom_params, eta2.atom_weights) if s == dom.alpha)
    b = sum(w for s, w in zip(eta1.atom_params, eta1.atom_weights) if s == dom.beta) - \
        sum(w for s, w in zip(eta2.atom_params, eta2.atom_weights) if s == dom.beta)
    # maximise a u + b v over |u|, |v| <= 1, |u - v| <= L: check polygon vertices
    cand = [(u, v) for u in (-1, 1) for v in (-1, 1) if abs(u - v) <= L]
    for u in (-1.0, 1.0):
        for sgn in (-1.0, 1.0):
            v = u + sgn * L
            if abs(v) <= 1:
                cand += [(u, v), (v, u)]
    return float(max(abs(a * u + b * v) for u, v in cand))


def bl_distance(eta1, eta2, kmax=32):
    """Bounded-Lipschitz distance on a fixed dictionary.

    Circle: sup over f in {1, c_k cos(k s), c_k sin(k s) : k <= kmax} with
    c_k = min(1, R/k), each f bounded by 1 and 1-Lipschitz in arc length.  This
    is a lower bound of the true BL metric.  Interval: the exact BL distance of
    two measures on {alpha, beta}.
    """
    if eta1.domain.kind == "interval":
        return _bl_1d(eta1, eta2)
    R = eta1.domain.radius
    c1, s1 = eta1.fourier(kmax)
    c2, s2 = eta2.fourier(kmax)
    k = np.arange(kmax + 1)
    scale = np.minimum(1.0, R / np.maximum(k, 1))
    dc = np.abs(c1 - c2) * scale
    ds = np.abs(s1 - s2) * scale
    return float(max(dc.max(), ds.max()))


def pair_with_test(eta, A, u, boundary=None):
    """int <A grad u, nu> d eta; atoms exactly, density by fine trapezoid."""
    dom = eta.domain

    def f(x):
        s = dom.parameter_of(x)
        nu = dom.boundary_normal(s)
        return np.einsum("ni,nij,nj->n", nu, A(x), u.grad(x))

    return eta.integrate(f)


def hat_averages(eta, angles):
    """Hat-weighted averages of eta at sorted periodic boundary angles.

    Returns (int phi_j d eta) / (int phi_j d sigma) where phi_j is the
    piecewise-linear hat in angle attached to node j.  The density part is
    integrated exactly (Simpson on the merged breakpoints of both PL grids),
    so PL densities on the node grid are reproduced and atoms keep their mass.
    """
    th = np.asarray(angles, float)
    R = eta.domain.radius
    m = len(th)
    nxt = np.roll(th, -1)
    nxt[-1] += TWO_PI
    gap = nxt - th                     # gap j: from node j to node j+1
    num = np.zeros(m)

    def locate(s):
        sm = np.mod(s - th[0], TWO_PI) + th[0]
        j = np.searchsorted(th, sm, side="right") - 1
        return sm, j

    if len(eta.atom_weights):
        sm, j = locate(eta.atom_params)
        t = (sm - th[j]) / gap[j]
        np.add.at(num, j, eta.atom_weights * (1 - t))
        np.add.at(num, (j + 1) % m, eta.atom_weights * t)
    if eta.density is not None:
        K = len(eta.density)
        grid = th[0] + np.mod(TWO_PI * np.arange(K) / K - th[0], TWO_PI)
        br = np.unique(np.concatenate([th, grid, [th[0] + TWO_PI]]))
        a, b = br[:-1], br[1:]
        c = 0.5 * (a + b)
        _, j = locate(c)
        L = R * (b - a) / 6
        for x, wt in ((a, 1.0), (c, 4.0), (b, 1.0)):
            t = (x - th[j]) / gap[j]
            f = eta.density_at(np.mod(x, TWO_PI)) * L * wt
            np.add.at(num, j, f * (1 - t))
            np.add.at(num, (j + 1) % m, f * t)
    den = 0.5 * R * (gap + np.roll(gap, 1))
    return num / den