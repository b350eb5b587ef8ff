import json
import os

import numpy as np
import pytest

from doublediv.config import SECTIONS, config_from_dict, load_config
from doublediv.errors import ConfigError

DATA = os.path.join(os.path.dirname(__file__), "data")
GOLDEN = os.path.join(DATA, "golden.toml")
PTS = np.array([[0.0, 0.0], [0.3, -0.4], [-0.5, 0.5]])

BASE = {"domain": {"kind": "disk", "center": [0.0, 0.0], "radius": 1.0},
        "omega": {"kind": "disk", "center": [0.0, 0.0], "radius": 2.0}}


def summary(cfg):
    """Normalised view of a parsed config, compared against the golden JSON."""
    c = cfg.coeffs
    r = lambda a: np.round(np.asarray(a, float), 10).tolist()  # noqa: E731
    return {
        "domain": {"kind": cfg.domain.kind, "center": list(cfg.domain.center),
                   "radius": cfg.domain.radius, "gap": cfg.domain.gap},
        "coefficients": {k: r(getattr(c, k)(PTS)) for k in ("A", "b", "G", "h")},
        "eta": {"atoms": r(np.column_stack([cfg.eta.atom_params, cfg.eta.atom_weights])),
                "density_len": len(cfg.eta.density), "tv": round(cfg.eta.total_variation(), 10),
                "mass": round(cfg.eta.mass(), 10)},
        "solver": cfg.solver, "verify": cfg.verify, "trace": cfg.trace, "study": cfg.study,
        "mesh_size": cfg.mesh_size,
    }


def test_golden():
    with open(os.path.join(DATA, "golden.json")) as fh:
        expected = json.load(fh)
    got = json.loads(json.dumps(summary(load_config(GOLDEN))))
    assert got == expected


def test_golden_covers_grammar():
    try:
        import tomllib as toml
    except ModuleNotFoundError:
        import tomli as toml
    with open(GOLDEN, "rb") as fh:
        raw = toml.load(fh)
    assert set(raw) == set(SECTIONS)
    # keys the golden file cannot combine: interval endpoints (covered by
    # test_interval_atoms) and manufactured rho/split, exclusive with G/h
    # (covered by test_manufactured_boundary)
    other = {"domain": {"alpha", "beta"}, "omega": {"alpha", "beta"},
             "coefficients": {"rho", "split"}}
    for sec, keys in SECTIONS.items():
        assert set(raw[sec]) | other.get(sec, set()) == keys, sec


def _cfg(**sections):
    raw = {k: dict(v) for k, v in BASE.items()}
    for k, v in sections.items():
        raw[k] = v
    return config_from_dict(raw, "test.toml")


def test_defaults():
    cfg = _cfg()
    assert cfg.solver["n_start"] == 4 and cfg.solver["kind"] == "standard_bump"
    assert cfg.mesh_size == pytest.approx(2.0 / 40)
    assert cfg.eta.total_variation() == 0
    assert np.allclose(cfg.coeffs.A(PTS), np.eye(2))


def test_scalar_A_is_multiple_of_identity():
    cfg = _cfg(coefficients={"A": "2+x1"})
    assert np.allclose(cfg.coeffs.A(PTS), (2 + PTS[:, 0])[:, None, None] * np.eye(2))


def test_manufactured_boundary():
    cfg = _cfg(coefficients={"rho": "2+x1", "split": 0.5}, boundary={"manufactured": True, "m": 32})
    # with G = rho A / 2, kappa = rho / 2 and eta = rho / 2
    s = 2 * np.pi * np.arange(32) / 32
    assert np.allclose(cfg.eta.density, 0.5 * (2 + np.cos(s)), atol=1e-12)
    assert cfg.rho is not None


def test_interval_atoms():
    raw = {"domain": {"kind": "interval", "alpha": 0.0, "beta": 1.0},
           "omega": {"kind": "interval", "alpha": -1.0, "beta": 2.0},
           "boundary": {"atoms": [[0.0, 0.7], [1.0, 1.3]]}}
    cfg = config_from_dict(raw)
    assert cfg.eta.atom_weights.tolist() == [0.7, 1.3]


@pytest.mark.parametrize("raw_patch,match", [
    ({"extra": {}}, r"\[extra\] unknown section"),
    ({"solver": {"nmax": 3}}, r"\[solver\] unknown field 'nmax'"),
    ({"solver": {"kind": "gauss"}}, r"\[solver\] kind must be"),
    ({"solver": {"stabilization": "supg"}}, r"stabilization"),
    ({"solver": {"p": 2.0}}, r"p must exceed the dimension 2"),
    ({"solver": {"n_start": 8, "n_max": 4}}, r"n_max >= n_start"),
    ({"solver": {"tol": 0.0}}, r"tol must be positive"),
    ({"solver": {"bank_degree": 9}}, r"bank_degree"),
    ({"coefficients": {"A": "x1 +* 2"}}, r"\[coefficients\] A:"),
    ({"coefficients": {"G": {"csv": "missing.csv"}}}, r"file not found"),
    ({"coefficients": {"G": {"shape": [2, 2]}}}, r"needs a 'csv' key"),
    ({"coefficients": {"rho": "x1", "G": "1"}}, r"either rho"),
    ({"boundary": {"manufactured": True}}, r"needs \[coefficients\].rho"),
    ({"boundary": {"density": "abc"}}, r"\[boundary\]"),
    ({"domain": {"kind": "square"}}, r"\[domain\] kind must be"),
    ({"domain": {"kind": "disk", "center": [0, 0]}}, r"missing field 'radius'"),
    ({"domain": {"kind": "disk", "center": [0, 0], "radius": 2.5}}, r"\[domain\]"),
    ({"verify": 3}, r"must be a table"),
])
def test_errors_name_the_field(raw_patch, match):
    raw = {k: dict(v) for k, v in BASE.items()}
    raw.update(raw_patch)
    with pytest.raises(ConfigError, match=match):
        config_from_dict(raw, "test.toml")


def test_missing_section():
    with pytest.raises(ConfigError, match=r"\[omega\] section is required"):
        config_from_dict({"domain": BASE["domain"]})


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="file not found"):
        load_config(tmp_path / "nope.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[domain\nkind = 1\n")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(bad)
