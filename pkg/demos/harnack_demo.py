# Nonnegative boundary data without G and h: the sup/inf ratio of the
# solution on a small inner ball stays put under mesh and level refinement.
import numpy as np

from doublediv import (BoundaryMeasure, CoefficientSet, DirichletProblem, harnack_check,
                       make_domain)

omega = make_domain("disk", center=(0.0, 0.0), radius=1.5)
D = make_domain("disk", center=(0.0, 0.0), radius=1.0, container=omega)
coeffs = CoefficientSet.build(2, A=[["2 + sin(x1)", "0.3"], ["0.3", "1 + x2**2"]],
                              b=["0.5*x2", "-0.2"])
eta = BoundaryMeasure.from_function(D, lambda x: 1.0 + 0.8 * np.cos(np.arctan2(x[:, 1], x[:, 0])))
problem = DirichletProblem(D, coeffs, eta)

rep = harnack_check(problem, x0=[0.0, 0.0], R=0.2, hs=[0.08, 0.05], ns=[8, 16])
for row in rep.rows:
    print(f"h={row['h']:.2f} n={row['n']:2d}  sup/inf = {row['ratio']:.4f}  min rho = {row['min_rho']:.3f}")
print("spread:", rep.spread, "stable:", rep.stable)
