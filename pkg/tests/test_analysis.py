import numpy as np
import pytest

from doublediv.analysis import (apriori_check, apriori_entry, apriori_to_dict, harnack_check,
                                harnack_ratio, modulus_check, nonnegativity, observed_order,
                                oscillation_curve, scale_problem)
from doublediv.errors import DomainError
from doublediv.fields import CoefficientSet
from doublediv.geometry import make_mesh
from doublediv.measures import BoundaryMeasure
from doublediv.solver import DirichletProblem, SolutionField, solve_measure


@pytest.fixture(scope="module")
def mesh():
    from doublediv.geometry import make_domain
    om = make_domain("disk", radius=2.0)
    return make_mesh(make_domain("disk", radius=1.0, container=om), 0.1)


CS = CoefficientSet.build(2, A=[["1+0.2*sin(x1)", "0.1*x2"], ["0.1*x2", "1.2"]], b=["x2", "-x1"])


def _solve(mesh):
    return lambda pb: solve_measure(pb, levels=[4, 8], mesh=mesh)[0]


def _random_problem(disk, seed):
    r = np.random.default_rng(seed)
    eta = BoundaryMeasure(disk, r.uniform(0, 2 * np.pi, 1), r.normal(size=1), r.normal(size=32))
    cs = CS.with_data(G=[[f"{r.normal():.4f}*x1", "0"], ["0", f"{r.normal():.4f}"]],
                      h=[f"{r.normal():.4f}", f"{r.normal():.4f}*x2"])
    return DirichletProblem(disk, cs, eta)


def test_uniqueness(disk, mesh):
    pb = DirichletProblem(disk, CS, BoundaryMeasure.zero(disk))
    rep = apriori_entry(pb, _solve(mesh)(pb))
    assert rep.ratio is None and rep.uniqueness_ok
    assert rep.rho_Lpconj <= 1e-8


def test_homogeneity(disk, mesh):
    pb = _random_problem(disk, 0)
    out = apriori_check([pb], [_solve(mesh)(pb)], _solve(mesh), lambdas=(2.0, -1.0, 0.5))
    assert all(h["relative"] <= 1e-6 for h in out["homogeneity"])
    d = apriori_to_dict(out)
    assert d["reports"][0]["ratio"] == out["envelope"]


def test_scale_problem(disk):
    pb = _random_problem(disk, 1)
    sp = scale_problem(pb, -2.0)
    assert sp.eta.total_variation() == pytest.approx(2 * pb.eta.total_variation())
    x = np.array([[0.3, 0.1]])
    assert np.allclose(sp.coeffs.G(x), -2 * pb.coeffs.G(x))
    assert np.allclose(sp.coeffs.A(x), pb.coeffs.A(x))


@pytest.fixture(scope="module")
def family(mesh):
    from doublediv.geometry import make_domain
    disk = make_domain("disk", radius=1.0, container=make_domain("disk", radius=2.0))
    pbs = [_random_problem(disk, s) for s in range(10)]
    return apriori_check(pbs, [_solve(mesh)(pb) for pb in pbs])


def test_envelope_is_max_ratio(family):
    ratios = [r.ratio for r in family["reports"]]
    assert all(np.isfinite(ratios)) and min(ratios) > 0
    assert family["envelope"] == max(ratios)


@pytest.mark.xfail(strict=True, reason="ratio spread of a random family is not saturated after "
                   "5 draws (observed 2.2x on seeds 0..9); see the decisions ledger")
def test_envelope_saturates_after_five(family):
    ratios = [r.ratio for r in family["reports"]]
    assert max(ratios) <= 1.05 * max(ratios[:5])


def test_nonnegativity_helper(mesh):
    v = np.linspace(0, 1, mesh.n_vertices)
    assert nonnegativity(SolutionField(mesh, v))["ok"]
    v[0] = -1e-3
    assert not nonnegativity(SolutionField(mesh, v))["ok"]


def test_harnack_constant(disk, mesh):
    s = SolutionField(mesh, np.full(mesh.n_vertices, 3.0))
    assert harnack_ratio(s, (0.1, 0.0), 0.2)["ratio"] == 1.0
    with pytest.raises(DomainError):
        harnack_ratio(s, (5.0, 5.0), 0.01)


def test_harnack_density_sigma(disk):
    pb = DirichletProblem(disk, CoefficientSet.build(2),
                          BoundaryMeasure.from_density(disk, np.ones(32)))
    rep = harnack_check(pb, (0.0, 0.0), 0.2, hs=(0.2, 0.1), ns=(4, 8))
    assert rep.stable
    assert all(abs(r["ratio"] - 1) <= 1e-6 for r in rep.rows)


def test_harnack_preconditions(disk):
    pb = DirichletProblem(disk, CoefficientSet.build(2), BoundaryMeasure.atoms(disk, [0.0], [1.0]))
    with pytest.raises(DomainError, match="4R"):
        harnack_check(pb, (0.5, 0.0), 0.2, hs=(0.1,), ns=(4,))
    pg = DirichletProblem(disk, CoefficientSet.build(2, h=["1", "0"]), pb.eta)
    with pytest.raises(DomainError, match="G = 0"):
        harnack_check(pg, (0.0, 0.0), 0.1, hs=(0.1,), ns=(4,))
    pn = DirichletProblem(disk, CoefficientSet.build(2), BoundaryMeasure.atoms(disk, [0.0], [-1.0]))
    with pytest.raises(DomainError, match="nonnegative"):
        harnack_check(pn, (0.0, 0.0), 0.1, hs=(0.1,), ns=(4,))


def test_harnack_failure_report(disk, monkeypatch):
    import doublediv.analysis as An
    real = An.solve_smooth

    def shifted(*a, **k):
        s = real(*a, **k)
        return SolutionField(s.mesh, s.values - 10.0)
    monkeypatch.setattr(An, "solve_smooth", shifted)
    pb = DirichletProblem(disk, CoefficientSet.build(2), BoundaryMeasure.atoms(disk, [0.0], [1.0]))
    rep = harnack_check(pb, (0.0, 0.0), 0.1, hs=(0.2,), ns=(4,))
    assert rep.failure and "nonnegativity" in rep.failure and not rep.stable


def test_harnack_atom(disk):
    pb = DirichletProblem(disk, CS, BoundaryMeasure.atoms(disk, [0.0], [1.0]))
    rep = harnack_check(pb, (-0.4, 0.0), 0.12, hs=(0.1, 0.05), ns=(4, 8))
    assert rep.failure is None
    assert all(np.isfinite(r["ratio"]) and r["ratio"] >= 1 for r in rep.rows)
    assert rep.argmax_shift <= 2 * 0.1


def _levels(disk, mesh, cs, kind="standard_bump", ns=(4, 8, 16)):
    eta = BoundaryMeasure.from_function(disk, lambda x: 1 + 0.5 * x[:, 0], 128)
    pb = DirichletProblem(disk, cs, eta)
    return {f"n={n}": solve_measure(pb, levels=[n], mesh=mesh, kind=kind)[0] for n in ns}


def test_modulus_constant_coefficients(disk, mesh):
    sols = _levels(disk, mesh, CoefficientSet.build(2))
    rep = modulus_check(sols, (0.0, 0.0), 0.5)
    # A_n = A at every level; only the mollified boundary data differ
    assert rep.level_independent and rep.level_spread < 0.01
    assert rep.intercept <= 1e-3
    assert all(b >= a for a, b in zip(rep.envelope, rep.envelope[1:]))


def test_modulus_smooth_intercept(disk, mesh):
    cs = CoefficientSet.build(2, A=[["1+0.3*sin(2*x1)", "0"], ["0", "1+0.2*cos(x2)"]])
    rep = modulus_check(_levels(disk, mesh, cs), (0.0, 0.0), 0.5, nbins=16)
    assert rep.intercept <= 1e-3
    assert rep.level_independent
    assert max(rep.sup_norms.values()) < 2.0


def test_modulus_kernels(disk, mesh):
    cs = CoefficientSet.build(2, A=[["1+0.3*sin(2*x1)", "0"], ["0", "1+0.2*cos(x2)"]])
    a = modulus_check(_levels(disk, mesh, cs, "standard_bump", (8,)), (0.0, 0.0), 0.5)
    b = modulus_check(_levels(disk, mesh, cs, "polynomial_bump", (8,)), (0.0, 0.0), 0.5)
    ea, eb = np.array(a.envelope), np.array(b.envelope)
    assert np.all(np.abs(ea - eb) <= 0.2 * np.maximum(ea, eb))


def test_modulus_export(tmp_path, disk, mesh):
    rep = modulus_check(_levels(disk, mesh, CoefficientSet.build(2), ns=(4,)), (0.0, 0.0), 0.5,
                        nbins=4)
    rep.write_csv(tmp_path / "m.csv")
    rep.write_json(tmp_path / "m.json")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "r_lo,r_hi,n=4,envelope" and len(lines) == 5


def test_oscillation_linear(mesh):
    s = SolutionField(mesh, mesh.vertices[:, 0].copy())
    edges = np.linspace(0, 0.2, 5)
    c = oscillation_curve(s, (0.0, 0.0), 0.5, edges)
    assert np.all(c <= edges[1:] + 1e-12)


def test_observed_order():
    hs = np.array([0.1, 0.05, 0.025])
    assert observed_order(hs, 3 * hs**2) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        observed_order(hs[:2], hs[:2])
