# Unit disk, A = I, b = G = h = 0 and a point mass at angle 0: the solution
# is the Poisson kernel.  Solve on the mollified levels and look at the
# error away from the atom.
import numpy as np

from doublediv import (BoundaryMeasure, CoefficientSet, DirichletProblem, make_domain,
                       make_mesh, solve_measure)

omega = make_domain("disk", center=(0.0, 0.0), radius=1.5)
D = make_domain("disk", center=(0.0, 0.0), radius=1.0, container=omega)
eta = BoundaryMeasure.atoms(D, [0.0], [1.0])
problem = DirichletProblem(D, CoefficientSet.build(2), eta)


def poisson(x, y0=np.array([1.0, 0.0])):
    r2 = (x ** 2).sum(axis=1)
    return (1 - r2) / (2 * np.pi * ((x - y0) ** 2).sum(axis=1))


mesh = make_mesh(D, 0.04)
sol, rep = solve_measure(problem, {"n_start": 4, "n_max": 32, "tol": 1e-3}, mesh=mesh)
print("mode:", rep.mode, "levels:", [lv["n"] for lv in rep.levels])

t = np.linspace(0, 2 * np.pi, 9)[:-1]
for r in [0.0, 0.3, 0.6]:
    x = np.column_stack([r * np.cos(t), r * np.sin(t)])
    print(f"r={r:.1f}  max error {np.abs(sol(x) - poisson(x)).max():.2e}")

# mean value property: rho(0) is the atom mass over the circumference
print("rho(0) =", sol(np.zeros((1, 2)))[0], " exact", 1 / (2 * np.pi))
