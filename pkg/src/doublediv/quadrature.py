"""Reference quadrature rules.

Simplex rules are given in barycentric coordinates ``(nq, d+1)`` with weights
summing to one (multiply by the cell measure).  Ball and disk rules return
physical points and weights.
"""
import numpy as np

# 3-point interior rule, exact for degree 2.  Used for all FE assembly.
_TRI_DEG2 = (
    np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
    np.full(3, 1 / 3),
)


def gauss_legendre(n, a=-1.0, b=1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def simplex_rule(dim, degree):
    """Barycentric points and unit-sum weights exact to ``degree``.

    In 2D, degree 2 returns the fixed 3-point rule; higher degrees use a
    collapsed (Duffy) Gauss product rule.
    """
    if dim == 1:
        n = max(1, int(np.ceil((degree + 1) / 2)))
        t, w = gauss_legendre(n, 0.0, 1.0)
        return np.column_stack([1 - t, t]), w
    if dim != 2:
        raise ValueError("only 1D and 2D simplices are supported")
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if degree == 2:
        return _TRI_DEG2[0].copy(), _TRI_DEG2[1].copy()
    n = int(np.ceil((degree + 2) / 2))
    u, wu = gauss_legendre(n, 0.0, 1.0)
    v, wv = gauss_legendre(n, 0.0, 1.0)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv) * (1 - U)
    l1 = U.ravel()
    l2 = ((1 - U) * V).ravel()
    bary = np.column_stack([1 - l1 - l2, l1, l2])
    w = 2.0 * W.ravel()  # reference triangle has area 1/2
    return bary, w


def unit_ball_rule(dim, n_radial=16, n_angular=32):
    """Symmetric rule on the closed unit ball for radial integrands.

    1D: Gauss-Legendre on [-1, 1].  2D: Gauss-Legendre in r (weight r) times
    an offset trapezoid rule in angle, so nodes come in antipodal pairs and
    never sit on the coordinate axes.
    """
    if dim == 1:
        x, w = gauss_legendre(2 * n_radial)
        return x[:, None], w
    if n_angular % 2:
        raise ValueError("n_angular must be even")
    r, wr = gauss_legendre(n_radial, 0.0, 1.0)
    th = 2 * np.pi * (np.arange(n_angular) + 0.5) / n_angular
    R, T = np.meshgrid(r, th, indexing="ij")
    pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    w = (np.outer(wr * r, np.full(n_angular, 2 * np.pi / n_angular))).ravel()
    return pts, w


def disk_rule(center, radius, n_radial=24, n_angular=64):
    """Polar product rule on a disk (exact area, spectral in angle)."""
    pts, w = unit_ball_rule(2, n_radial, n_angular)
    return np.asarray(center, float) + radius * pts, w * radius**2


def interval_rule(a, b, panels=64, order=8):
    """Composite Gauss-Legendre rule on [a, b]."""
    edges = np.linspace(a, b, panels + 1)
    t, w = gauss_legendre(order, 0.0, 1.0)
    h = np.diff(edges)
    x = (edges[:-1, None] + h[:, None] * t[None, :]).ravel()
    ww = (h[:, None] * w[None, :]).ravel()
    return x[:, None], ww


def domain_rule(domain, n_radial=48, n_angular=128, panels=64):
    """Quadrature over a whole Domain (disk: polar, interval: composite GL)."""
    if domain.kind == "disk":
        return disk_rule(domain.center, domain.radius, n_radial, n_angular)
    return interval_rule(domain.alpha, domain.beta, panels=panels)


def mesh_rule(mesh, degree=2):
    """Physical points, weights, and barycentric data for a simplicial mesh.

    Returns (x, w, bary, cells) with x of shape (nc*nq, d), w (nc*nq,),
    bary (nq, d+1) and cells (nc, d+1) so that a P1 field with nodal values v
    is ``(v[cells] @ bary.T).ravel()`` at the points.
    """
    bary, wq = simplex_rule(mesh.dim, degree)
    P = mesh.vertices[mesh.cells]                      # (nc, d+1, d)
    x = np.einsum("qk,ckd->cqd", bary, P).reshape(-1, mesh.dim)
    w = (mesh.cell_measures()[:, None] * wq[None, :]).ravel()
    return x, w, bary, mesh.cells


def p1_at_rule(values, bary, cells):
    return (np.asarray(values)[cells] @ bary.T).ravel()
