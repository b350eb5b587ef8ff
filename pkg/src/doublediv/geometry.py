"""Domains, boundary grids and meshes for intervals and disks.

Only two domain kinds exist: ``interval(alpha, beta)`` in 1D and
``disk(center, radius)`` in 2D.  A domain may carry a strictly larger
``container`` (the ambient open set Omega); the gap between the closure of
the domain and the container boundary is computed once and stored.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ResourceError

MAX_VERTICES = 10**7


@dataclass(frozen=True)
class Domain:
    kind: str
    alpha: float = 0.0
    beta: float = 0.0
    center: tuple = (0.0, 0.0)
    radius: float = 0.0
    container: "Domain | None" = None
    gap: "float | None" = None

    @property
    def dim(self):
        return 1 if self.kind == "interval" else 2

    @property
    def diameter(self):
        return self.beta - self.alpha if self.kind == "interval" else 2 * self.radius

    @property
    def inradius(self):
        return 0.5 * (self.beta - self.alpha) if self.kind == "interval" else self.radius

    @property
    def volume(self):
        if self.kind == "interval":
            return self.beta - self.alpha
        return np.pi * self.radius**2

    @property
    def boundary_measure(self):
        """sigma_{d-1}(boundary): 2 (counting measure) or the circumference."""
        return 2.0 if self.kind == "interval" else 2 * np.pi * self.radius

    def distance_to_boundary(self, x):
        """Signed distance to the boundary, positive inside."""
        x = as_points(x, self.dim)
        if self.kind == "interval":
            t = x[:, 0]
            return np.minimum(t - self.alpha, self.beta - t)
        return self.radius - np.linalg.norm(x - np.asarray(self.center), axis=1)

    def contains(self, x, tol=0.0):
        return self.distance_to_boundary(x) >= -tol

    def enlarged(self, r):
        """The open r-neighbourhood of the domain (same kind, no container)."""
        if self.kind == "interval":
            return Domain("interval", alpha=self.alpha - r, beta=self.beta + r)
        return Domain("disk", center=self.center, radius=self.radius + r)

    def boundary_point(self, s):
        """Boundary points for parameter values (angles, or alpha/beta in 1D)."""
        s = np.atleast_1d(np.asarray(s, float))
        if self.kind == "interval":
            return s[:, None]
        c = np.asarray(self.center)
        return c + self.radius * np.column_stack([np.cos(s), np.sin(s)])

    def boundary_normal(self, s):
        s = np.atleast_1d(np.asarray(s, float))
        if self.kind == "interval":
            return np.where(np.isclose(s, self.alpha), -1.0, 1.0)[:, None]
        return np.column_stack([np.cos(s), np.sin(s)])

    def parameter_of(self, x):
        """Inverse of :meth:`boundary_point` (angle in [0, 2pi) for disks)."""
        x = as_points(x, self.dim)
        if self.kind == "interval":
            return x[:, 0].copy()
        d = x - np.asarray(self.center)
        return np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi)

    def to_dict(self):
        if self.kind == "interval":
            out = {"kind": "interval", "alpha": self.alpha, "beta": self.beta}
        else:
            out = {"kind": "disk", "center": list(self.center), "radius": self.radius}
        if self.container is not None:
            out["container"] = self.container.to_dict()
        return out


def as_points(x, dim):
    """Coerce to an (N, dim) float array."""
    x = np.asarray(x, dtype=float)
    if dim == 1:
        if x.ndim == 0:
            return x.reshape(1, 1)
        if x.ndim == 1:
            return x[:, None]
        return x
    if x.ndim == 1:
        return x[None, :]
    return x


def _gap(inner, outer):
    if inner.kind != outer.kind:
        raise GeometryError("domain and container must have the same kind")
    if inner.kind == "interval":
        return min(inner.alpha - outer.alpha, outer.beta - inner.beta)
    off = np.linalg.norm(np.subtract(inner.center, outer.center))
    return outer.radius - off - inner.radius


def make_domain(kind, container=None, **params):
    """Build a validated Domain.

    ``container`` may be a Domain or a dict of the same form; it must contain
    the closure of the new domain with a positive gap.
    """
    if kind == "interval":
        alpha = float(params.get("alpha", 0.0))
        beta = float(params.get("beta", 1.0))
        if not beta > alpha:
            raise GeometryError(f"interval needs beta > alpha (got alpha={alpha}, beta={beta})")
        dom = Domain("interval", alpha=alpha, beta=beta)
    elif kind == "disk":
        center = tuple(float(c) for c in params.get("center", (0.0, 0.0)))
        if len(center) != 2:
            raise GeometryError("disk center must have two coordinates")
        radius = float(params.get("radius", 1.0))
        if not radius > 0:
            raise GeometryError(f"disk needs radius > 0 (got {radius})")
        dom = Domain("disk", center=center, radius=radius)
    else:
        raise GeometryError(f"unknown domain kind {kind!r}")
    if container is None:
        return dom
    if isinstance(container, dict):
        container = make_domain(**container)
    gap = _gap(dom, container)
    if not gap > 0:
        raise GeometryError(
            f"no positive gap between the domain closure and its container (gap={gap:g})")
    return Domain(dom.kind, dom.alpha, dom.beta, dom.center, dom.radius,
                  container=container.__class__(container.kind, container.alpha,
                                                container.beta, container.center,
                                                container.radius),
                  gap=float(gap))


def domain_from_dict(spec):
    spec = dict(spec)
    return make_domain(spec.pop("kind"), **spec)


@dataclass(frozen=True)
class BoundaryGrid:
    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    params: np.ndarray
    domain: Domain = field(repr=False, default=None)

    @property
    def m(self):
        return len(self.weights)


def boundary_grid(domain, m):
    """Quadrature grid for the surface measure on the boundary.

    Interval: the two endpoints with unit weights (counting measure), ``m``
    must be 2.  Circle: ``m >= 16`` equispaced angles with trapezoid weights.
    """
    if domain.kind == "interval":
        if m != 2:
            raise GeometryError("an interval boundary has exactly 2 nodes")
        s = np.array([domain.alpha, domain.beta])
        return BoundaryGrid(s[:, None], np.array([[-1.0], [1.0]]), np.ones(2), s, domain)
    if m < 16:
        raise GeometryError(f"circle boundary grid needs m >= 16 (got {m})")
    s = 2 * np.pi * np.arange(m) / m
    nodes = domain.boundary_point(s)
    normals = domain.boundary_normal(s)
    w = np.full(m, 2 * np.pi * domain.radius / m)
    return BoundaryGrid(nodes, normals, w, s, domain)


@dataclass(frozen=True)
class Mesh:
    """Conforming simplicial mesh: triangles in 2D, segments in 1D."""

    vertices: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray
    h: float
    domain: Domain = field(repr=False, default=None)

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return len(self.vertices)

    def cell_measures(self):
        P = self.vertices[self.cells]
        if self.dim == 1:
            return np.abs(P[:, 1, 0] - P[:, 0, 0])
        e1 = P[:, 1] - P[:, 0]
        e2 = P[:, 2] - P[:, 0]
        return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edges(self):
        c = self.cells
        if self.dim == 1:
            return np.sort(c, axis=1)
        e = np.vstack([c[:, [0, 1]], c[:, [1, 2]], c[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def max_edge_length(self):
        e = self.edges()
        return float(np.max(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)))

    @property
    def boundary_indices(self):
        return np.flatnonzero(self.boundary)

    def write_text(self, path):
        """Debug listing: 'v x1 [x2]' lines, then 'c i j [k]' lines."""
        with open(path, "w") as fh:
            for v in self.vertices:
                fh.write("v " + " ".join(repr(float(t)) for t in v) + "\n")
            for c in self.cells:
                fh.write("c " + " ".join(str(int(i)) for i in c) + "\n")


def triangulate_disk(domain, h):
    """Radial-layer triangulation of a disk.

    Ring k (k = 1..n) has radius k R / n and 6k equispaced vertices; rings are
    stitched by walking both angle lists.  The outer ring lies exactly on the
    circle.
    """
    if domain.kind != "disk":
        raise GeometryError("triangulate_disk needs a disk")
    R = domain.radius
    if not 0 < h <= R / 2:
        raise GeometryError(f"mesh size must satisfy 0 < h <= R/2 (got h={h}, R={R})")
    n = int(np.ceil(R / h))
    nv = 1 + 3 * n * (n + 1)
    if nv > MAX_VERTICES:
        raise ResourceError(f"mesh would have {nv} vertices (> {MAX_VERTICES})")
    c = np.asarray(domain.center, float)

    verts = [c[None, :]]
    angles = [np.zeros(1)]
    start = [0]
    offset = 1
    for k in range(1, n + 1):
        th = 2 * np.pi * np.arange(6 * k) / (6 * k)
        r = R if k == n else R * k / n
        verts.append(c + r * np.column_stack([np.cos(th), np.sin(th)]))
        angles.append(th)
        start.append(offset)
        offset += 6 * k
    V = np.vstack(verts)

    tris = []
    for j in range(6):
        tris.append((0, 1 + j, 1 + (j + 1) % 6))
    for k in range(2, n + 1):
        ti, to = angles[k - 1], angles[k]
        ni, no = len(ti), len(to)
        si, so = start[k - 1], start[k]
        i = j = 0
        while i < ni or j < no:
            # advance on the side whose new diagonal is shorter
            a, b = si + i % ni, so + j % no
            a1, b1 = si + (i + 1) % ni, so + (j + 1) % no
            if i >= ni:
                take_outer = True
            elif j >= no:
                take_outer = False
            else:
                take_outer = (np.sum((V[a] - V[b1]) ** 2) <= np.sum((V[a1] - V[b]) ** 2))
            if take_outer:
                tris.append((a, b, b1))
                j += 1
            else:
                tris.append((a, b, a1))
                i += 1
    T = np.array(tris, dtype=np.int64)
    # orient counter-clockwise
    P = V[T]
    cross = ((P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1])
             - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0]))
    flip = cross < 0
    T[flip] = T[flip][:, [0, 2, 1]]
    bnd = np.zeros(len(V), bool)
    bnd[start[n]:] = True
    mesh = Mesh(V, T, bnd, 0.0, domain)
    return Mesh(V, T, bnd, mesh.max_edge_length(), domain)


def mesh_interval(domain, h):
    """Uniform segment mesh of an interval with cell size at most h."""
    if domain.kind != "interval":
        raise GeometryError("mesh_interval needs an interval")
    L = domain.beta - domain.alpha
    if not 0 < h <= L / 2:
        raise GeometryError(f"mesh size must satisfy 0 < h <= L/2 (got h={h})")
    n = int(np.ceil(L / h - 1e-9))
    if n + 1 > MAX_VERTICES:
        raise ResourceError(f"mesh would have {n + 1} vertices")
    x = np.linspace(domain.alpha, domain.beta, n + 1)
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    bnd = np.zeros(n + 1, bool)
    bnd[[0, -1]] = True
    return Mesh(x[:, None], cells, bnd, L / n, domain)


def make_mesh(domain, h):
    if domain.kind == "disk":
        return triangulate_disk(domain, h)
    return mesh_interval(domain, h)


def inner_cutoff(omega, n):
    """Indicator of Omega_n = {x in Omega : dist(x, boundary) > 1/n}."""
    if n < 1:
        raise GeometryError("cutoff index n must be >= 1")
    r = 1.0 / n

    def indicator(x):
        return (omega.distance_to_boundary(x) > r).astype(float)

    indicator.n = n
    indicator.domain = omega
    return indicator
