"""Run configuration: a TOML file with fixed sections.

Grammar (all sections optional except [domain] and [omega])::

    [domain]            kind = "disk" | "interval"
                        center = [c1, c2], radius = R      (disk)
                        alpha = a, beta = b                (interval)
    [omega]             same keys; the enclosing domain, must leave a gap
    [coefficients]      A, b, G, h: expression strings in x1, x2 (a scalar
                        string for A means scalar * I), nested lists for
                        vectors and matrices, or {csv = "path", shape = [..]}
                        rho = "expr", split = s   manufactured data: G and h
                                                   are generated so that rho
                                                   solves the problem
    [boundary]          atoms = [[param, weight], ...]  (angle in 2D,
                        endpoint coordinate in 1D)
                        density = [v0, v1, ...]         equispaced angles
                        density_expr = "expr"            sampled at m nodes
                        m = 256
                        manufactured = true   eta = (rho - kappa) sigma from
                                              [coefficients].rho
    [solver]            p, h, n_start, n_max, tol, kind, stabilization,
                        bank_degree, deterministic, seed
    [verify]            tol, solution
    [trace]             rho, levels, m, tol, bounded, use_coefficients,
                        sweep_center, sweep_radii, sweep_count, sweep_rmax
    [study]             sweep = "h" | "n", values = [...], exact = "expr",
                        exact_coefficients = false,
                        harnack_center = [..], harnack_radius = r

Unknown sections or keys are rejected with the offending name.
"""
import os
from dataclasses import dataclass, field as dc_field

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:  # python < 3.11
    import tomli

from .errors import ConfigError, UnsupportedError
from .fields import CoefficientSet, as_field, load_grid_csv, manufacture, scalar_field
from .geometry import make_domain
from .measures import BoundaryMeasure, kappa_values
from .mollify import KINDS

SECTIONS = {
    "domain": {"kind", "center", "radius", "alpha", "beta"},
    "omega": {"kind", "center", "radius", "alpha", "beta"},
    "coefficients": {"A", "b", "G", "h", "rho", "split"},
    "boundary": {"atoms", "density", "density_expr", "m", "manufactured"},
    "solver": {"p", "h", "n_start", "n_max", "tol", "kind", "stabilization", "bank_degree",
               "deterministic", "seed"},
    "verify": {"tol", "solution"},
    "trace": {"rho", "levels", "m", "tol", "bounded", "use_coefficients", "sweep_center",
              "sweep_radii", "sweep_count", "sweep_rmax"},
    "study": {"sweep", "values", "exact", "exact_coefficients", "harnack_center",
              "harnack_radius"},
}

SOLVER_DEFAULTS = {"p": None, "h": None, "n_start": 4, "n_max": 64, "tol": 1e-4,
                   "kind": "standard_bump", "stabilization": "auto", "bank_degree": 4,
                   "deterministic": False, "seed": 0}


@dataclass
class RunConfig:
    path: str
    raw: dict
    domain: object
    coeffs: CoefficientSet
    eta: BoundaryMeasure
    solver: dict
    verify: dict = dc_field(default_factory=dict)
    trace: dict = dc_field(default_factory=dict)
    study: dict = dc_field(default_factory=dict)
    rho: object = None          # manufactured / exact solution, if given

    @property
    def mesh_size(self):
        h = self.solver["h"]
        return h if h is not None else self.domain.diameter / 40


def _err(path, where, msg):
    return ConfigError(f"{path}: [{where}] {msg}")


def _domain(spec, where, path, container=None):
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in ("disk", "interval"):
        raise _err(path, where, f"kind must be 'disk' or 'interval' (got {kind!r})")
    try:
        if kind == "disk":
            return make_domain("disk", center=tuple(spec["center"]), radius=float(spec["radius"]),
                               container=container)
        return make_domain("interval", alpha=float(spec["alpha"]), beta=float(spec["beta"]),
                           container=container)
    except KeyError as exc:
        raise _err(path, where, f"missing field {exc.args[0]!r}") from None
    except Exception as exc:
        raise _err(path, where, str(exc)) from None


def _field(value, shape, dim, name, path, base):
    if isinstance(value, dict):
        p = value.get("csv")
        if p is None:
            raise _err(path, "coefficients", f"{name}: table form needs a 'csv' key")
        p = p if os.path.isabs(p) else os.path.join(base, p)
        if not os.path.exists(p):
            raise _err(path, "coefficients", f"{name}: file not found: {p}")
        return load_grid_csv(p, tuple(value.get("shape", shape)))
    try:
        return as_field(value, shape, dim)
    except Exception as exc:
        raise _err(path, "coefficients", f"{name}: {exc}") from None


def _check_keys(raw, path):
    for sec, body in raw.items():
        if sec not in SECTIONS:
            raise _err(path, sec, "unknown section")
        if not isinstance(body, dict):
            raise _err(path, sec, "must be a table")
        for k in body:
            if k not in SECTIONS[sec]:
                raise _err(path, sec, f"unknown field {k!r}")
    for sec in ("domain", "omega"):
        if sec not in raw:
            raise _err(path, sec, "section is required")


def load_config(path):
    """Parse and validate a TOML run configuration."""
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, path)


def config_from_dict(raw, path="<config>"):
    _check_keys(raw, path)
    base = os.path.dirname(os.path.abspath(path)) if os.path.exists(str(path)) else os.getcwd()
    omega = _domain(raw["omega"], "omega", path)
    D = _domain(raw["domain"], "domain", path, container=omega)
    d = D.dim
    cs = raw.get("coefficients", {})
    A = _field(cs.get("A"), (d, d), d, "A", path, base) if "A" in cs else None
    b = _field(cs.get("b"), (d,), d, "b", path, base)
    rho = None
    if "rho" in cs:
        if "G" in cs or "h" in cs:
            raise _err(path, "coefficients", "give either rho (manufactured) or G/h, not both")
        rho = scalar_field(cs["rho"], d)
        base_set = CoefficientSet.build(d, A=A, b=b)
        try:
            G, h = manufacture(rho, base_set.A, base_set.b, float(cs.get("split", 1.0)))
        except UnsupportedError as exc:
            raise _err(path, "coefficients", str(exc)) from None
        coeffs = CoefficientSet.build(d, A=base_set.A, b=base_set.b, G=G, h=h)
    else:
        coeffs = CoefficientSet.build(d, A=A, b=b,
                                      G=_field(cs.get("G"), (d, d), d, "G", path, base),
                                      h=_field(cs.get("h"), (d,), d, "h", path, base))
    eta = _boundary(raw.get("boundary", {}), D, coeffs, rho, path)
    solver = dict(SOLVER_DEFAULTS)
    solver.update(raw.get("solver", {}))
    _check_solver(solver, D, path)
    return RunConfig(str(path), raw, D, coeffs, eta, solver, dict(raw.get("verify", {})),
                     dict(raw.get("trace", {})), dict(raw.get("study", {})), rho)


def _boundary(bs, D, coeffs, rho, path):
    eta = BoundaryMeasure.zero(D)
    m = int(bs.get("m", 256))
    try:
        if bs.get("manufactured"):
            if rho is None:
                raise _err(path, "boundary", "manufactured = true needs [coefficients].rho")
            eta = eta + manufactured_eta(D, coeffs, rho, m)
        if "atoms" in bs:
            at = np.asarray(bs["atoms"], float).reshape(-1, 2)
            if D.kind == "interval":
                eta = eta + BoundaryMeasure.atoms(D, at[:, 0], at[:, 1])
            else:
                eta = eta + BoundaryMeasure.atoms(D, np.mod(at[:, 0], 2 * np.pi), at[:, 1])
        if "density" in bs:
            eta = eta + BoundaryMeasure.from_density(D, bs["density"])
        if "density_expr" in bs:
            f = scalar_field(bs["density_expr"], D.dim)
            eta = eta + BoundaryMeasure.from_function(D, lambda x: f(x).reshape(-1), m)
    except ConfigError:
        raise
    except Exception as exc:
        raise _err(path, "boundary", str(exc)) from None
    return eta


def manufactured_eta(D, coeffs, rho, m=256):
    """eta = (rho - kappa) sigma for a solution rho defined across the boundary."""
    if D.kind == "interval":
        x = np.array([[D.alpha], [D.beta]])
        nu = np.array([[-1.0], [1.0]])
        v = rho(x).reshape(-1) - kappa_values(coeffs.A, coeffs.G, x, nu)
        return BoundaryMeasure.endpoints(D, v[0], v[1])
    s = 2 * np.pi * np.arange(m) / m
    x, nu = D.boundary_point(s), D.boundary_normal(s)
    return BoundaryMeasure.from_density(D, rho(x).reshape(-1) - kappa_values(coeffs.A, coeffs.G, x, nu))


def _check_solver(s, D, path):
    if s["kind"] not in KINDS:
        raise _err(path, "solver", f"kind must be one of {KINDS}")
    if s["stabilization"] not in ("auto", "none", "upwind"):
        raise _err(path, "solver", "stabilization must be auto, none or upwind")
    if s["p"] is not None and not float(s["p"]) > D.dim:
        raise _err(path, "solver", f"p must exceed the dimension {D.dim}")
    if not (int(s["n_max"]) >= int(s["n_start"]) >= 1):
        raise _err(path, "solver", "need n_max >= n_start >= 1")
    if not float(s["tol"]) > 0:
        raise _err(path, "solver", "tol must be positive")
    if s["h"] is not None and not float(s["h"]) > 0:
        raise _err(path, "solver", "h must be positive")
    if not 0 <= int(s["bank_degree"]) <= 6:
        raise _err(path, "solver", "bank_degree must be in 0..6")


__all__ = ["RunConfig", "load_config", "config_from_dict", "manufactured_eta", "SECTIONS"]
