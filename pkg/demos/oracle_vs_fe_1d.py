# 1D problem with endpoint atoms: compare the RK4 shooting oracle with the
# P1 solver on the approximate levels and watch the error fall with h.
import numpy as np

from doublediv import (BoundaryMeasure, CoefficientSet, DirichletProblem, exact_solve_1d,
                       make_domain, make_mesh, solve_measure)

omega = make_domain("interval", alpha=-1.0, beta=2.0)
D = make_domain("interval", alpha=0.0, beta=1.0, container=omega)

# variable A, drift and a little G/h data
coeffs = CoefficientSet.build(1, A=[["1 + 0.5*x1**2"]], b=["0.3*cos(x1)"],
                              G=[["0.2*x1"]], h=["0.1*sin(3*x1)"])
eta_a, eta_b = 1.0, 2.5
oracle = exact_solve_1d(coeffs, D, eta_a, eta_b)

problem = DirichletProblem(D, coeffs, BoundaryMeasure.endpoints(D, eta_a, eta_b))
xs = np.linspace(0, 1, 401)
print("      h     max|rho_h - rho|")
for h in [0.1, 0.05, 0.025, 0.0125]:
    sol, rep = solve_measure(problem, {"n_start": 64, "n_max": 64}, mesh=make_mesh(D, h))
    err = np.abs(sol(xs[:, None]) - oracle(xs)).max()
    print(f"{h:8.4f}   {err:.3e}")

print("oracle rho at the endpoints:", oracle(np.array([0.0, 1.0])))
print("boundary densities kappa:", oracle.kappa_alpha, oracle.kappa_beta)
