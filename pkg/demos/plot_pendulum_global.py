"""
Global stability of a linearly controlled pendulum
===================================================

The local verifier first tries a whole-space argument: if the Jacobian
residual is small enough everywhere, the quadratic Lyapunov function is a
global certificate and no level bisection is needed.
"""

from roa.benchmarks import pendulum
from roa.local import local_stability_verifier

sys = pendulum()
print(sys.f)

# A and P come from the linearization at the origin
print("A =\n", sys.A)
print("P =\n", sys.P)

res = local_stability_verifier(sys)
print("globally stable:", res.globally_stable)
print(f"boxes: {res.boxes_processed}, time: {res.wall_time * 1e3:.1f} ms")
