import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from doublediv.errors import GeometryError, ResolutionError
from doublediv.fields import CoefficientSet, as_field, certify_h1_h2, lp_norm, scalar_field
from doublediv.mollify import (KINDS, GridLevel, Mollifier, admissible_sequence, cached_level,
                               convolve, convolve_points, make_mollifier, problem_hash)
from doublediv.quadrature import disk_rule, interval_rule


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("eps", [1.0, 0.3, 0.01])
def test_normalised_2d(kind, eps):
    m = make_mollifier(kind, eps, 2)
    x, w = disk_rule((0.0, 0.0), eps, n_radial=80, n_angular=64)
    assert abs(np.sum(w * m(x)) - 1) < 1e-8
    first = np.sum(w[:, None] * x * m(x)[:, None], axis=0)
    assert np.abs(first).max() < 1e-10 * max(1.0, 1 / eps)


@pytest.mark.parametrize("kind", KINDS)
def test_normalised_1d(kind):
    m = make_mollifier(kind, 0.2, 1)
    x, w = interval_rule(-0.2, 0.2, panels=200)
    assert abs(np.sum(w * m(x)) - 1) < 1e-8


@given(r=st.floats(1.0, 3.0), t=st.floats(0, 2 * np.pi), kind=st.sampled_from(KINDS))
def test_support(r, t, kind):
    m = Mollifier(kind, 0.3)
    x = np.array([[0.3 * r * np.cos(t), 0.3 * r * np.sin(t)]])
    assume(np.hypot(*x[0]) >= 0.3)
    assert m(np.array([[0.3 * r * np.cos(t), 0.3 * r * np.sin(t)]]))[0] == 0.0


def test_bad_width():
    with pytest.raises(ValueError):
        make_mollifier("standard_bump", 0.0)
    with pytest.raises(ValueError):
        make_mollifier("gaussian", 0.1)


def test_constant_and_affine():
    m = Mollifier("standard_bump", 0.1)
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (20, 2))
    c = convolve_points(scalar_field("3.5", 2), m, x)
    assert np.abs(c - 3.5).max() < 1e-8
    aff = scalar_field("1+2*x1-0.7*x2", 2)
    assert np.abs(convolve_points(aff, m, x) - aff(x)).max() < 1e-8


@pytest.mark.parametrize("kind", KINDS)
def test_half_plane_interface(kind):
    m = Mollifier(kind, 0.2)
    f = as_field(lambda x: (x[:, 0] > 0).astype(float), (), 2)
    x = np.column_stack([np.zeros(5), np.linspace(-0.3, 0.3, 5)])
    assert np.abs(convolve_points(f, m, x) - 0.5).max() < 1e-6


def test_convolve_grid_and_resolution():
    m = Mollifier("polynomial_bump", 0.2)
    f = scalar_field("x1^2", 2)
    ax = (np.linspace(-0.5, 0.5, 21), np.linspace(-0.5, 0.5, 21))
    val, grad = convolve(f, m, ax)
    x = np.array([[0.1, 0.2]])
    assert abs(val(x)[0] - 0.01 - np.sum(m.rule()[1] * (0.2 * m.rule()[0][:, 0]) ** 2)) < 1e-12
    assert abs(grad(x)[0, 0] - 0.2) < 1e-8
    with pytest.raises(ResolutionError):
        convolve(f, m, (np.linspace(-0.5, 0.5, 5), np.linspace(-0.5, 0.5, 5)))


def test_constant_coefficients_reproduced(disk):
    cs = CoefficientSet.build(2, A=[["2", "0.5"], ["0.5", "1"]], b=["1", "-2"])
    lvl = admissible_sequence(cs, disk, 4)
    x = disk_rule((0, 0), 1.0, 6, 12)[0]
    f = lvl.fields(x)
    assert np.abs(f["A"] - cs.A(x)).max() < 1e-8
    assert np.abs(f["b"] - cs.b(x)).max() < 1e-8
    assert np.abs(f["divA"]).max() < 1e-8
    assert lvl.distances["A_inf"] < 1e-8


def test_gap_precondition(disk):
    cs = CoefficientSet.build(2)
    with pytest.raises(GeometryError, match="cutoff would touch D"):
        admissible_sequence(cs, disk, 1)


@pytest.mark.parametrize("n", [4, 8, 16])
def test_sup_distance_below_modulus(disk, n):
    A = as_field([["1+0.5*sin(3*x1)", "0.2*x2"], ["0.2*x2", "1.5+0.3*cos(2*x2)"]], (2, 2), 2)
    cs = CoefficientSet.build(2, A=A)
    cert = certify_h1_h2(A, disk.container, N=4000)
    lvl = admissible_sequence(cs, disk, n)
    assert lvl.distances["A_inf"] <= float(cert.omega_at(1.0 / n))


def test_discontinuous_b_converges(disk):
    b = as_field(lambda x: np.column_stack([(x[:, 0] > 0.1).astype(float), np.zeros(len(x))]),
                 (2,), 2)
    cs = CoefficientSet.build(2, b=b)
    d = [admissible_sequence(cs, disk, n).distances["b_Lp"] for n in (2, 4, 8, 16)]
    assert all(a > b_ for a, b_ in zip(d, d[1:]))


def test_ellipticity_and_modulus_preserved(disk):
    A = as_field([["1+0.5*sin(3*x1)", "0.2*x2"], ["0.2*x2", "1.5+0.3*cos(2*x2)"]], (2, 2), 2)
    cs = CoefficientSet.build(2, A=A)
    cert = certify_h1_h2(A, disk.container, N=2000)
    for n in (2, 8):
        lvl = admissible_sequence(cs, disk, n, record=False)
        cn = certify_h1_h2(lvl.A, disk, N=1000)
        lam = np.linalg.eigvalsh(lvl.A(disk_rule((0, 0), 1.0, 12, 24)[0]))
        assert lam[:, 0].min() >= cert.theta - 1e-8
        assert lam[:, -1].max() <= 1 / cert.theta + 1e-8
        for r, w in cn.omega:
            assert w <= cert.omega_at(r) + 2 * cert.omega_at(1.0 / n) + 1e-12


def test_kernel_derivative_matches_fd(disk):
    A = as_field([["1+0.5*x1^2", "0.3*sin(x2)"], ["0.3*sin(x2)", "1+x1*x2"]], (2, 2), 2)
    cs = CoefficientSet.build(2, A=A, b=["x2", "1"])
    from doublediv.solver import reformulate
    data = reformulate(admissible_sequence(cs, disk, 8, record=False))
    assert data.identity_check(disk, npts=20) < 1e-4


def test_cutoff_extension(omega2, disk):
    # b = 1 everywhere; b_n must vanish near the boundary of Omega and equal 1 on D
    cs = CoefficientSet.build(2, b=["1", "0"], A="2")
    lvl = admissible_sequence(cs, disk, 4, record=False)
    assert abs(lvl.b(np.array([[1.99, 0.0]]))[0, 0]) < 1e-14
    assert abs(lvl.b(np.array([[0.5, 0.0]]))[0, 0] - 1) < 1e-12
    # A is extended by the identity outside Omega
    assert np.allclose(lvl.A(np.array([[1.999, 0.0]]))[0], 1.5 * np.eye(2), atol=0.5)


def test_grid_level_roundtrip(tmp_path, disk):
    cs = CoefficientSet.build(2, A=[["1+0.2*x1", "0"], ["0", "1"]], b=["x2", "0"])
    lvl = admissible_sequence(cs, disk, 4, record=False)
    g = lvl.to_grid(disk, spacing=0.0625)
    p = str(tmp_path / "lvl.csv")
    g.save_csv(p)
    g2 = GridLevel.load_csv(p)
    x = np.array([[0.3, -0.2], [0.0, 0.5]])
    for k in ("A", "b", "divA"):
        assert np.array_equal(g.fields(x)[k], g2.fields(x)[k])
    assert np.abs(g.fields(x)["A"] - lvl.A(x)).max() < 1e-3
    with pytest.raises(ResolutionError):
        lvl.to_grid(disk, spacing=0.1)


def test_cached_level(tmp_path, disk):
    cs = CoefficientSet.build(2, A=[["1+0.2*x1", "0"], ["0", "1"]])
    key = problem_hash({"A": "1+0.2*x1"})
    calls = []

    def build():
        calls.append(1)
        return admissible_sequence(cs, disk, 2)
    a = cached_level(str(tmp_path), key, 2, build, disk)
    b = cached_level(str(tmp_path), key, 2, build, disk)
    assert len(calls) == 1
    x = np.array([[0.1, 0.1]])
    assert np.array_equal(a.A(x), b.A(x))
    assert problem_hash({"b": 1, "a": 2}) == problem_hash({"a": 2, "b": 1})
