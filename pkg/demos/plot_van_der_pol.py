"""
Van der Pol: quadratic and neural regions of attraction
========================================================

The reversed Van der Pol oscillator has a bounded domain of attraction
whose boundary is an unstable limit cycle.  We certify an ellipse with
the linearization, then train a network on Zubov's equation and certify a
much larger sublevel set of it.

Training below uses a tenth of the benchmark collocation points so the
script finishes in a few minutes; ``roa run configs/van_der_pol_mu1.json``
uses the full settings.
"""

import numpy as np

from roa.benchmarks import van_der_pol
from roa.contour import export_contours
from roa.learner import TrainConfig, train
from roa.local import local_stability_verifier
from roa.neuralverify import neural_verifier
from roa.reach import quadratic_reach_verifier
from roa.volume import estimate_volume, neural_region, quadratic_region
from roa.zubovdata import generate_data

sys = van_der_pol(1.0)

# quadratic certificate: local level, then the reach extension
c1_P = local_stability_verifier(sys).level
c2_P = quadratic_reach_verifier(sys, c1_P).level
print(f"c1_P = {c1_P:.4f}, c2_P = {c2_P:.4f}")

# simulated Zubov values for the data term
data = generate_data(sys, 3000, alpha=0.1, seed=0)
print(len(data), "labelled points,", int(np.sum(data.labels == 1.0)), "diverging")

cfg = TrainConfig(num_colloc_pts=30_000, max_epoch=20, alpha=0.1, seed=0)
net, history = train(sys, data, cfg)
print("final loss:", history[-1]["total"])

c1_V, c2_V, res = neural_verifier(sys, net, c2_P)
print(f"c1_V = {c1_V:.4f}, c2_V = {c2_V:.4f}  ({res.wall_time:.0f} s)")

# fraction of the simulated domain of attraction covered by each region
for name, member in (("quadratic", quadratic_region(sys.P, c2_P)),
                     ("neural", neural_region(net, c2_V))):
    v = estimate_volume(member, sys)
    print(f"{name:9s} {v.fraction:.3f} of the DOA, {v.domain_fraction:.3f} of the box")

export_contours({"V_P": (lambda X: np.einsum("ij,jk,ik->i", X, sys.P, X), [c1_P, c2_P]),
                 "W_N": (net.forward, [c1_V, c2_V])},
                sys.domain, "vdp_contours.csv", "vdp_contours.svg")
