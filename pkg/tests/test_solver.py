import numpy as np
import pytest

from doublediv.errors import GeometryError, SolverError
from doublediv.fields import CoefficientSet, ExprField, manufacture
from doublediv.geometry import make_domain, make_mesh
from doublediv.measures import BoundaryMeasure
from doublediv.mollify import ExactLevel, admissible_sequence
from doublediv.oracle1d import exact_solve_1d
from doublediv.solver import (DirichletProblem, SolutionField, assemble, boundary_values,
                              level_schedule, read_solution_csv, reformulate, solve_linear,
                              solve_measure, solve_smooth)
from doublediv.weakform import dirichlet_residual, interior_residual

from conftest import TRIPLES


@pytest.fixture(scope="module")
def mesh():
    om = make_domain("disk", radius=2.0)
    return make_mesh(make_domain("disk", radius=1.0, container=om), 0.1)


def _pts(n=20, seed=0):
    r = np.random.default_rng(seed)
    return r.uniform(-0.6, 0.6, (n, 2))


# --- reformulation ---------------------------------------------------------

def test_reformulate_constant_A():
    cs = CoefficientSet.build(2, A=[["2", "0.5"], ["0.5", "1"]], b=["x2", "sin(x1)"])
    f = reformulate(ExactLevel(cs)).at(_pts())
    assert np.allclose(f["btilde"], cs.b(_pts()), atol=1e-14)


def test_reformulate_constant_G():
    cs = CoefficientSet.build(2, G=[["3", "1"], ["1", "2"]])
    assert np.abs(reformulate(ExactLevel(cs)).r(_pts())).max() == 0


def test_reformulate_linear_A():
    cs = CoefficientSet.build(2, A="1+x1", b=["x2", "1"])
    bt = reformulate(ExactLevel(cs)).btilde(_pts())
    assert np.allclose(bt, cs.b(_pts()) - [1.0, 0.0], atol=1e-14)


def test_reformulate_mollified_identity(disk):
    cs = CoefficientSet.build(2, A=[["1+0.3*sin(2*x1)", "0.1*x2"], ["0.1*x2", "1+x1^2"]])
    level = admissible_sequence(cs, disk, 8)
    assert reformulate(level).identity_check(disk, npts=20) <= 1e-4


def test_reformulate_needs_fields():
    with pytest.raises(TypeError):
        reformulate(object())


# --- smooth solves -----------------------------------------------------------

def test_constant_solution(mesh):
    for b in (None, ["1", "-2"]):
        level = ExactLevel(CoefficientSet.build(2, b=b))
        s = solve_smooth(mesh, level, np.full(len(mesh.boundary_indices), 1.7))
        assert np.abs(s.values - 1.7).max() <= 1e-10


def test_manufactured_order(disk):
    rs, A, b = TRIPLES[1]
    base = CoefficientSet.build(2, A=A, b=b)
    G, h = manufacture(rs, base.A, base.b)
    cs = CoefficientSet.build(2, A=base.A, b=base.b, G=G, h=h)
    rho = ExprField(rs, 2, ())
    errs = []
    for hh in (0.1, 0.05):
        m = make_mesh(disk, hh)
        level = ExactLevel(cs)
        s = solve_smooth(m, level, boundary_values(m, level, BoundaryMeasure.zero(disk)))
        errs.append(s.error(rho, 2.0))
    assert np.log2(errs[0] / errs[1]) >= 1.5


def test_residual_decreases_under_refinement(disk):
    # fixed level n, residual against the mollified data shrinks with h
    cs = CoefficientSet.build(2, A=[["1+0.2*x1", "0"], ["0", "1"]], b=["x2", "0"])
    eta = BoundaryMeasure.from_function(disk, lambda x: 1 + 0.5 * x[:, 0], 256)
    level = admissible_sequence(cs, disk, 8)
    lc = level.coefficient_set()
    res = []
    for hh in (0.2, 0.1, 0.05):
        m = make_mesh(disk, hh)
        s = solve_smooth(m, level, boundary_values(m, level, eta))
        res.append(dirichlet_residual(s, lc, disk, eta).max_abs)
    assert res[0] > res[1] > res[2]
    assert np.log2(res[1] / res[2]) >= 1.0


def test_boundary_length_mismatch(mesh):
    with pytest.raises(ValueError):
        solve_smooth(mesh, ExactLevel(CoefficientSet.build(2)), np.zeros(3))


def test_nonfinite_assembly(mesh):
    class Bad:
        def at(self, x):
            n = len(x)
            return {"A": np.full((n, 2, 2), np.nan), "btilde": np.zeros((n, 2)),
                    "r": np.zeros((n, 2))}
    with pytest.raises(SolverError):
        assemble(mesh, Bad())


def test_singular_system():
    import scipy.sparse as sp
    with pytest.raises(SolverError):
        solve_linear(sp.csr_matrix(np.zeros((3, 3))), np.ones(3))


def test_deterministic_assembly(mesh):
    cs = CoefficientSet.build(2, A=[["1+0.3*x1", "0"], ["0", "1"]], b=["x2", "x1"])
    d = reformulate(ExactLevel(cs))
    K1, F1, _ = assemble(mesh, d, deterministic=True)
    K2, F2, _ = assemble(mesh, d, deterministic=True)
    assert np.array_equal(K1.data, K2.data) and np.array_equal(F1, F2)


def test_upwind_z_matrix(mesh):
    cs = CoefficientSet.build(2, b=["40", "-30"])
    K, _, info = assemble(mesh, reformulate(ExactLevel(cs)), "upwind")
    C = K.tocoo()
    off = C.row != C.col
    assert C.data[off].max() <= 1e-12
    assert info["upwind_edges"] > 0
    # row sums are unchanged by the added graph Laplacian
    K0, _, _ = assemble(mesh, reformulate(ExactLevel(cs)), "auto")
    assert np.allclose(np.asarray(K.sum(1)).ravel(), np.asarray(K0.sum(1)).ravel(), atol=1e-10)


def test_solution_field_roundtrip(tmp_path, mesh):
    s = SolutionField(mesh, np.sin(mesh.vertices[:, 0]))
    s.write_csv(tmp_path / "s.csv")
    t = read_solution_csv(tmp_path / "s.csv", mesh)
    assert np.array_equal(s.values, t.values)
    # interpolant reproduces nodal values
    assert np.abs(s(mesh.vertices) - s.values).max() <= 1e-12
    with pytest.raises(ValueError):
        SolutionField(mesh, np.ones(3))
    with pytest.raises(SolverError):
        SolutionField(mesh, np.full(mesh.n_vertices, np.inf))


def test_solution_csv_mismatch(tmp_path, mesh, disk):
    SolutionField(mesh, np.zeros(mesh.n_vertices)).write_csv(tmp_path / "s.csv")
    with pytest.raises(GeometryError):
        read_solution_csv(tmp_path / "s.csv", make_mesh(disk, 0.2))


def test_norms(mesh):
    s = SolutionField(mesh, np.ones(mesh.n_vertices))
    area = mesh.cell_measures().sum()
    assert s.norm(1.0) == pytest.approx(area, rel=1e-12)
    assert s.norm(np.inf) == 1.0


# --- schedule ---------------------------------------------------------------

def test_level_schedule():
    assert level_schedule(4, 64) == [4, 8, 16, 32, 64]
    assert level_schedule(3, 20) == [3, 6, 12, 20]
    with pytest.raises(ValueError):
        level_schedule(8, 4)


def test_problem_validation(disk):
    with pytest.raises(ValueError):
        DirichletProblem(disk, CoefficientSet.build(2), BoundaryMeasure.zero(disk), p=2.0)
    bare = make_domain("disk", radius=1.0)
    with pytest.raises(GeometryError):
        DirichletProblem(bare, CoefficientSet.build(2), BoundaryMeasure.zero(bare))


def test_cutoff_touching_D(disk):
    pb = DirichletProblem(disk, CoefficientSet.build(2), BoundaryMeasure.zero(disk))
    with pytest.raises(GeometryError):
        solve_measure(pb, dict(n_start=1, n_max=4))


def test_constant_density_every_level(disk, mesh):
    pb = DirichletProblem(disk, CoefficientSet.build(2), BoundaryMeasure.from_density(disk, np.full(64, 2.0)))
    sol, rep = solve_measure(pb, dict(n_start=4, n_max=16, tol=1e-12), mesh=mesh)
    assert np.abs(sol.values - 2).max() <= 1e-10
    assert rep.mode == "norm"
    assert max(rep.increments) <= 1e-10
    assert [lv["n"] for lv in rep.levels] == sorted({lv["n"] for lv in rep.levels})


def test_1d_matches_oracle(interval):
    cs = CoefficientSet.build(1, A=[["1+0.5*sin(3*x1)"]], b=["cos(2*x1)"], G=[["0.3*x1"]],
                              h=["x1^2"])
    o = exact_solve_1d(cs, interval, 0.7, 1.3)
    pb = DirichletProblem(interval, cs, o.eta(interval))
    sol, rep = solve_measure(pb, dict(n_start=64, n_max=4096, tol=1e-6), h=1e-3)
    assert sol.error(o, pb.p_conj) <= 1e-3


def test_poisson_kernel_atom(disk):
    eta = BoundaryMeasure.atoms(disk, [0.0], [1.0])
    pb = DirichletProblem(disk, CoefficientSet.build(2), eta)
    res, errs = [], []
    x = _pts(40, 1) * 0.7
    e = np.array([1.0, 0.0])
    P = (1 - np.sum(x**2, 1)) / (2 * np.pi * np.sum((x - e) ** 2, 1))
    for hh in (0.1, 0.05):
        sol, rep = solve_measure(pb, dict(n_start=8, n_max=32, tol=1e-4), h=hh)
        assert rep.mode == "weak-only"
        res.append(dirichlet_residual(sol, CoefficientSet.build(2), disk, eta).max_abs)
        errs.append(np.abs(sol(x) - P).max())
    assert res[1] < res[0]
    assert errs[1] < 0.05


def test_superposition(disk, mesh):
    cs = CoefficientSet.build(2, A=[["1+0.2*sin(x1)", "0"], ["0", "1"]], b=["x2", "0"])
    e1 = BoundaryMeasure.atoms(disk, [0.5], [1.0])
    e2 = BoundaryMeasure.from_function(disk, lambda x: 1 + x[:, 1] ** 2, 128)
    c2 = cs.with_data(G=[["x1", "0"], ["0", "1"]], h=["1", "0"])
    run = lambda c, e: solve_measure(DirichletProblem(disk, c, e), levels=[4, 8],  # noqa: E731
                                     mesh=mesh)[0]
    s1, s2 = run(cs, e1), run(c2, e2)
    s12 = run(c2.with_data(G=c2.G * 2.0, h=c2.h * 2.0), e1 + e2.scaled(2.0))
    assert np.abs(s12.values - s1.values - 2 * s2.values).max() <= 1e-8 * (1 + np.abs(s12.values).max())


def test_nonconvergence_warning(disk, mesh, monkeypatch):
    import doublediv.solver as S
    calls = iter(range(100))

    def fake_norm(self, q, degree=4):
        return 1.0 + next(calls)  # increments grow forever
    monkeypatch.setattr(S.SolutionField, "norm", fake_norm)
    pb = DirichletProblem(disk, CoefficientSet.build(2), BoundaryMeasure.from_density(disk, np.ones(8)))
    with pytest.warns(RuntimeWarning, match="non-decreasing"):
        _, rep = solve_measure(pb, dict(n_start=4, n_max=32, tol=1e-12), mesh=mesh)
    assert not rep.converged and rep.warnings
