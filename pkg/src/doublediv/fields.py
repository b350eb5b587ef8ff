"""Coefficient fields A, b, G, h and sampled hypothesis certificates.

Fields are vectorised callables ``f(x) -> array`` with ``x`` of shape
``(N, d)`` and output ``(N,)``, ``(N, d)`` or ``(N, d, d)``.  Closed-form
fields keep their sympy expressions so that exact derivatives and products are
available; grid-sampled fields interpolate piecewise linearly.
"""
import ast
import csv
from dataclasses import dataclass, field as dc_field

import numpy as np
import sympy
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree
from sympy.parsing.sympy_parser import (convert_xor, parse_expr,
                                        standard_transformations)

from .errors import (DomainError, EllipticityError, EvaluationError,
                     UnsupportedError)
from .geometry import as_points
from .quadrature import domain_rule

X1, X2 = sympy.symbols("x1 x2", real=True)
SYMBOLS = (X1, X2)
S = sympy.Symbol("s", real=True)  # boundary angle parameter

_NAMES = {"exp": sympy.exp, "sin": sympy.sin, "cos": sympy.cos, "sqrt": sympy.sqrt,
          "pi": sympy.pi, "E": sympy.E, "x1": X1, "x2": X2, "s": S}
_FUNCS = {sympy.exp, sympy.sin, sympy.cos}
_TRANSFORMS = standard_transformations + (convert_xor,)


_AST_OK = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load, ast.Call,
           ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.BitXor, ast.USub, ast.UAdd)


def _check_syntax(text):
    """Reject anything but arithmetic on whitelisted names before sympy evals it."""
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _AST_OK):
            raise ValueError(f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Name) and node.id not in _NAMES:
            raise ValueError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and (not isinstance(node.func, ast.Name) or node.keywords):
            raise ValueError(f"disallowed call in {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValueError(f"only numeric constants allowed in {text!r}")


def parse_expression(text, variables=SYMBOLS):
    """Parse an expression string over x1, x2 with +, -, *, /, ^, exp, sin, cos."""
    if isinstance(text, sympy.Basic):
        expr = text
    elif isinstance(text, (int, float)):
        expr = sympy.sympify(text)
    else:
        _check_syntax(str(text))
        try:
            expr = parse_expr(str(text), local_dict=dict(_NAMES), transformations=_TRANSFORMS)
        except Exception as exc:  # sympy raises a zoo of types here
            raise ValueError(f"cannot parse expression {text!r}: {exc}") from None
    bad = expr.free_symbols - set(variables)
    if bad:
        raise ValueError(f"unknown names {sorted(map(str, bad))} in {text!r}")
    for f in expr.atoms(sympy.Function):
        if f.func not in _FUNCS:
            raise ValueError(f"function {f.func} not allowed in {text!r}")
    return expr


class Field:
    """Base class: a vectorised field on R^dim with value shape ``shape``."""

    closed_form = False

    def __init__(self, shape, dim):
        self.shape = tuple(shape)
        self.dim = dim

    def __call__(self, x):
        x = as_points(x, self.dim)
        out = self._eval(x)
        if len(self.shape) == 2:
            out = 0.5 * (out + np.swapaxes(out, -1, -2))
        return out

    def _eval(self, x):
        raise NotImplementedError

    def __mul__(self, c):
        c = float(c)
        return CallableField(lambda x: c * self(x), self.shape, self.dim)

    __rmul__ = __mul__

    def __add__(self, other):
        return CallableField(lambda x: self(x) + other(x), self.shape, self.dim)


class ExprField(Field):
    """Closed-form field given by sympy expressions in x1 (, x2)."""

    closed_form = True

    def __init__(self, exprs, dim, shape=None):
        arr = np.empty(shape if shape is not None else np.shape(exprs), dtype=object)
        flat = np.asarray(exprs, dtype=object).reshape(-1) if np.ndim(exprs) else [exprs]
        arr.reshape(-1)[:] = [parse_expression(e, SYMBOLS[:dim]) for e in flat]
        super().__init__(arr.shape, dim)
        self.exprs = arr
        self._fns = [sympy.lambdify(SYMBOLS[:dim], e, "numpy") for e in arr.reshape(-1)]

    def _eval(self, x):
        n = len(x)
        args = [x[:, k] for k in range(self.dim)]
        cols = []
        for fn, e in zip(self._fns, self.exprs.reshape(-1)):
            v = fn(*args)
            cols.append(np.broadcast_to(np.asarray(v, float), (n,)))
        out = np.stack(cols, axis=-1) if cols else np.zeros((n, 0))
        return out.reshape((n,) + self.shape)

    @property
    def is_constant(self):
        return all(e.is_number for e in self.exprs.reshape(-1))

    def diff(self, k):
        d = np.vectorize(lambda e: sympy.diff(e, SYMBOLS[k]), otypes=[object])(self.exprs)
        return ExprField(d, self.dim, self.shape)

    def divergence(self):
        """Vector field -> scalar sum_i d_i f^i; matrix -> vector sum_j d_j m^{ij}."""
        if len(self.shape) == 1:
            return ExprField(sum(sympy.diff(self.exprs[i], SYMBOLS[i]) for i in range(self.dim)),
                             self.dim, ())
        rows = [sum(sympy.diff(self.exprs[i, j], SYMBOLS[j]) for j in range(self.dim))
                for i in range(self.dim)]
        return ExprField(rows, self.dim, (self.dim,))

    def times(self, scalar_expr):
        s = parse_expression(scalar_expr, SYMBOLS[:self.dim])
        return ExprField(self.exprs * s, self.dim, self.shape)

    def __mul__(self, c):
        if isinstance(c, (int, float)):
            k = sympy.Integer(int(c)) if float(c).is_integer() else sympy.Float(c)
            return ExprField(self.exprs * k, self.dim, self.shape)
        return super().__mul__(c)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, ExprField):
            return ExprField(self.exprs + other.exprs, self.dim, self.shape)
        return super().__add__(other)

    def strings(self):
        return np.vectorize(str, otypes=[object])(self.exprs).tolist()

    def __repr__(self):
        return f"ExprField({self.strings()!r})"


class CallableField(Field):
    """Wrap an arbitrary vectorised Python callable (no derivatives)."""

    def __init__(self, fn, shape, dim):
        super().__init__(shape, dim)
        self.fn = fn

    def _eval(self, x):
        n = len(x)
        return np.broadcast_to(np.asarray(self.fn(x), float), (n,) + self.shape).copy()


class GridField(Field):
    """Piecewise-linear interpolant of values on a tensor grid.

    ``axes`` is a tuple of 1D coordinate arrays; ``values`` has shape
    ``grid_shape + shape``.  Points outside the grid raise DomainError.
    """

    def __init__(self, axes, values, shape=()):
        axes = tuple(np.asarray(a, float) for a in axes)
        super().__init__(shape, len(axes))
        self.axes = axes
        self.values = np.asarray(values, float)
        flat = self.values.reshape(self.values.shape[:self.dim] + (-1,))
        self._interp = RegularGridInterpolator(axes, flat, method="linear",
                                               bounds_error=False, fill_value=np.nan)

    def _eval(self, x):
        lo = np.array([a[0] for a in self.axes])
        hi = np.array([a[-1] for a in self.axes])
        span = hi - lo
        if np.any(x < lo - 1e-12 * span) or np.any(x > hi + 1e-12 * span):
            raise DomainError("point outside the sampling grid")
        out = self._interp(np.clip(x, lo, hi))
        return out.reshape((len(x),) + self.shape)


def load_grid_csv(path, shape=()):
    """Load a grid-sampled field from CSV: header row, columns x1[, x2], values.

    Values are listed in row-major order of ``shape``; rows may come in any
    order but must fill a tensor grid.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    dim = sum(1 for c in header if c.strip() in ("x1", "x2"))
    ncomp = int(np.prod(shape)) if shape else 1
    if data.shape[1] != dim + ncomp:
        raise ValueError(f"{path}: expected {dim + ncomp} columns, got {data.shape[1]}")
    axes = [np.unique(data[:, k]) for k in range(dim)]
    idx = [np.searchsorted(axes[k], data[:, k]) for k in range(dim)]
    vals = np.full(tuple(len(a) for a in axes) + (ncomp,), np.nan)
    vals[tuple(idx)] = data[:, dim:]
    if np.isnan(vals).any():
        raise ValueError(f"{path}: samples do not fill a tensor grid")
    return GridField(axes, vals.reshape(tuple(len(a) for a in axes) + tuple(shape)), shape)


def as_field(value, shape, dim):
    """Coerce strings, numbers, nested lists, sympy or callables into a Field."""
    if isinstance(value, Field):
        return value
    if value is None:
        if len(shape) == 2:
            return ExprField(np.zeros(shape, dtype=int).tolist(), dim, shape)
        return ExprField(np.zeros(shape, dtype=int).tolist() if shape else 0, dim, shape)
    if callable(value) and not isinstance(value, sympy.Basic):
        return CallableField(value, shape, dim)
    if isinstance(value, (str, int, float, sympy.Basic)) and len(shape) == 2:
        # scalar times identity
        e = parse_expression(value, SYMBOLS[:dim])
        return ExprField(sympy.eye(dim) * e, dim, shape)
    return ExprField(value, dim, shape)


def identity(dim):
    return ExprField(sympy.eye(dim), dim, (dim, dim))


@dataclass(frozen=True)
class CoefficientSet:
    """The four coefficient fields of div^2(rho A) - div(rho b) = div^2 G - div h."""

    A: Field
    b: Field
    G: Field
    h: Field
    dim: int

    @classmethod
    def build(cls, dim, A=None, b=None, G=None, h=None):
        mat, vec = (dim, dim), (dim,)
        A = identity(dim) if A is None else as_field(A, mat, dim)
        return cls(A, as_field(b, vec, dim), as_field(G, mat, dim), as_field(h, vec, dim), dim)

    @property
    def closed_form(self):
        return all(f.closed_form for f in (self.A, self.b, self.G, self.h))

    def with_data(self, G=None, h=None):
        """Same operator (A, b), new right-hand side."""
        return CoefficientSet(self.A, self.b,
                              self.G if G is None else as_field(G, (self.dim,) * 2, self.dim),
                              self.h if h is None else as_field(h, (self.dim,), self.dim),
                              self.dim)

    def scaled(self, lam):
        """Scale the data (G, h) by ``lam``."""
        return CoefficientSet(self.A, self.b, self.G * lam, self.h * lam, self.dim)

    def describe(self):
        """JSON-friendly description (expression strings where available)."""
        out = {}
        for name in ("A", "b", "G", "h"):
            f = getattr(self, name)
            out[name] = f.strings() if isinstance(f, ExprField) else type(f).__name__
        return out


def evaluate(field, x, domain):
    """Checked evaluation: x must lie in ``domain`` and values must be finite."""
    x = as_points(x, field.dim)
    tol = 1e-12 * domain.diameter
    if not np.all(domain.contains(x, tol)):
        raise DomainError("evaluation point outside the domain")
    out = field(x)
    if not np.all(np.isfinite(out)):
        raise EvaluationError("field produced a non-finite value")
    return out


def sample_domain(domain, n, seed=0):
    """``n`` uniform samples; samples for n are a prefix of those for n' > n."""
    rng = np.random.default_rng(seed)
    u = rng.random((n, 2))
    if domain.kind == "interval":
        return (domain.alpha + (domain.beta - domain.alpha) * u[:, 0])[:, None]
    r = domain.radius * np.sqrt(u[:, 0])
    t = 2 * np.pi * u[:, 1]
    return np.asarray(domain.center) + np.column_stack([r * np.cos(t), r * np.sin(t)])


@dataclass
class EllipticityCertificate:
    """Sampled estimates of the (H1)-(H3) constants.  Estimates, not proofs."""

    theta: float
    omega: list = dc_field(default_factory=list)  # [(r, omega(r))], r increasing
    p: "float | None" = None
    omega_tilde: "list | None" = None
    heuristic: bool = True

    @property
    def p_conj(self):
        return None if self.p is None else self.p / (self.p - 1)

    def omega_at(self, r):
        """Upper envelope: value at the first sampled radius >= r."""
        r = np.asarray(r, float)
        if not self.omega:
            return np.zeros_like(r)
        rs = np.array([a for a, _ in self.omega])
        ws = np.array([b for _, b in self.omega])
        i = np.searchsorted(rs, r, side="left")
        out = ws[np.minimum(i, len(ws) - 1)]
        return np.where(r <= 0, 0.0, out)

    def with_p(self, p, dim):
        if not p > dim:
            raise ValueError(f"need p > d (got p={p}, d={dim})")
        return EllipticityCertificate(self.theta, list(self.omega), float(p), self.omega_tilde)

    def to_dict(self):
        return {"theta": self.theta, "omega": [list(t) for t in self.omega], "p": self.p,
                "p_conj": self.p_conj, "omega_tilde": self.omega_tilde,
                "heuristic": self.heuristic}


def _spectral_norm(M):
    return np.max(np.abs(np.linalg.eigvalsh(M)), axis=-1)


def certify_h1_h2(A, domain, N=1000, seed=0, bins=20, band=16):
    """Sampled ellipticity constant theta and continuity modulus omega of A.

    theta_est = min over samples of min(lambda_min, 1/lambda_max), capped at 1.
    omega_est(r) is the largest spectral-norm difference over sampled pairs at
    distance <= r.  Pairs are the ``band`` nearest indices in sampling order
    plus all pairs closer than diameter/100, so the pair set for N is contained
    in the pair set for any larger N and both estimates tighten monotonically.
    """
    if N < 100:
        raise ValueError("certify_h1_h2 needs N >= 100 samples")
    x = sample_domain(domain, N, seed)
    M = A(x)
    lam = np.linalg.eigvalsh(M)
    bad = np.flatnonzero(lam[:, 0] <= 0)
    if len(bad):
        raise EllipticityError(f"A is not positive definite at x={x[bad[0]].tolist()}",
                               witness=x[bad[0]])
    theta = float(min(1.0, lam[:, 0].min(), (1.0 / lam[:, -1]).min()))

    i_band = np.concatenate([np.arange(N - k) for k in range(1, band + 1)])
    j_band = np.concatenate([np.arange(k, N) for k in range(1, band + 1)])
    close = cKDTree(x).query_pairs(domain.diameter / 100, output_type="ndarray")
    I = np.concatenate([i_band, close[:, 0]])
    J = np.concatenate([j_band, close[:, 1]])
    dist = np.linalg.norm(x[I] - x[J], axis=1)
    diff = _spectral_norm(M[I] - M[J])
    edges = domain.diameter * np.arange(1, bins + 1) / bins
    order = np.argsort(dist)
    cummax = np.maximum.accumulate(diff[order])
    k = np.searchsorted(dist[order], edges, side="right")
    omega = [(float(r), float(cummax[i - 1]) if i > 0 else 0.0) for r, i in zip(edges, k)]
    return EllipticityCertificate(theta, omega)


def _norm_values(vals, kind):
    if vals.ndim == 1:
        return np.abs(vals)
    if vals.ndim == 2:
        return np.linalg.norm(vals, axis=1)
    if kind == "max":
        return np.max(np.abs(vals), axis=(1, 2))
    return _spectral_norm(vals)


def lp_norm(f, domain, q, rule=None, matrix_norm="max"):
    """L^q(domain) norm by the domain quadrature.  Vectors use |.|_2; matrices
    the max-entry norm by default."""
    x, w = rule if rule is not None else domain_rule(domain)
    return lq_of_values(f(x), w, q, matrix_norm)


def lq_of_values(vals, w, q, matrix_norm="max"):
    """L^q norm from field values at quadrature nodes with weights ``w``."""
    v = _norm_values(np.asarray(vals, float), matrix_norm)
    if not np.all(np.isfinite(v)):
        raise EvaluationError("non-integrable sample (NaN/inf) in norm quadrature")
    if np.isinf(q):
        return float(v.max())
    return float(np.sum(w * v**q) ** (1.0 / q))


def certify_h3(b, h, G, domain, p):
    """Norms ||b||_{L^p}, ||h||_{L^1}, ||G||_{L^p'} on the closed domain."""
    if not p > domain.dim:
        raise ValueError(f"need p > d (got p={p})")
    pc = p / (p - 1)
    rule = domain_rule(domain)
    return {"b_Lp": lp_norm(b, domain, p, rule), "h_L1": lp_norm(h, domain, 1.0, rule),
            "G_Lpconj": lp_norm(G, domain, pc, rule), "p": p, "p_conj": pc,
            "matrix_norm": "max-entry",
            "quadrature": ("polar Gauss-Legendre x trapezoid" if domain.kind == "disk"
                           else "composite Gauss-Legendre"),
            "quadrature_points": int(len(rule[1]))}


def manufacture(rho, A, b, split=1.0):
    """Right-hand data making ``rho`` an exact solution for (A, b).

    With ``split = 1`` this is G = rho A, h = rho b, which satisfies the
    equation identically without any differentiation.  Other ``split`` values
    move part of the second-order term into h:
    G = split rho A, h = rho b - (1 - split) div(rho A).
    """
    if not (isinstance(A, ExprField) and isinstance(b, ExprField)):
        raise UnsupportedError("manufacture needs closed-form A and b")
    if isinstance(rho, ExprField):
        r = rho.exprs.reshape(-1)[0]
    else:
        try:
            r = parse_expression(rho, SYMBOLS[:A.dim])
        except (TypeError, ValueError) as exc:
            raise UnsupportedError(f"manufacture needs a closed-form rho: {exc}") from None
    rA = ExprField(A.exprs * r, A.dim, A.shape)
    rb = ExprField(b.exprs * r, b.dim, b.shape)
    if split == 1.0:
        return rA, rb
    G = ExprField(rA.exprs * sympy.Float(split), A.dim, A.shape)
    h = ExprField(rb.exprs - rA.divergence().exprs * sympy.Float(1 - split), b.dim, b.shape)
    return G, h


def scalar_field(value, dim):
    return as_field(value, (), dim)
