# Recover the boundary measure of a smooth solution from interior data
# (kernel averages near the boundary) and check it on a family of circles.
import numpy as np

from doublediv import make_domain, radius_sweep, scalar_field, trace_limit

omega = make_domain("disk", center=(0.0, 0.0), radius=2.0)
D = make_domain("disk", center=(0.0, 0.0), radius=1.0, container=omega)
rho = scalar_field("2 + x1**2 + exp(x2)", 2)

diag = trace_limit(rho, D, residual=False)
print("eps:", np.round(diag.eps, 4))
print("bl between consecutive levels:", [f"{v:.2e}" for v in diag.bl_consecutive])
s = 2 * np.pi * np.arange(len(diag.eta_values)) / len(diag.eta_values)
exact = rho(D.boundary_point(s)).reshape(-1)
print("max |trace density - rho on the circle| =", np.abs(diag.eta_values - exact).max())

sw = radius_sweep(rho, np.array([0.0, 0.0]), [0.2, 0.4, 0.6, 0.8], omega)
for row in sw["radii"]:
    print(f"R={row['R']:.1f}  bl(trace, rho sigma) = {row['bl']:.2e}")
