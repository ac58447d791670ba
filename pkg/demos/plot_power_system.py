"""
Two-machine power system from a finished run
============================================

Training and verification for this benchmark take several minutes, so
this script reads the artifacts of ``roa run``: the report, the trained
network and the dataset.  Run the configuration first:

    roa run configs/two_machine_power.json --out runs/power
"""

import json
import sys
from pathlib import Path

import numpy as np

from roa.benchmarks import power_system
from roa.learner import MlpNet
from roa.zubovdata import Dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/power")
report = json.loads((out / "report.json").read_text())
levels = report["levels"]
print({k: round(v, 4) for k, v in levels.items() if v is not None})

vol = report["stages"]["volume"]
for region in ("quadratic", "neural"):
    print(f"{region:9s} covers {vol[region]['fraction']:.3f} of the simulated DOA")

# the unstable equilibrium at (pi/3, 0) caps any certified sublevel set
power = power_system()
net = MlpNet.load(out / "net.txt")
saddle = np.array([[np.pi / 3, 0.0]])
print("W at the saddle:", float(net.forward(saddle)[0]), " c2_V:", levels["c2_V"])

# how well the network matches the simulated labels
data = Dataset.load(out / "data.csv")
err = np.abs(net.forward(data.points) - data.labels)
print(f"label error: median {np.median(err):.4f}, max {err.max():.4f}")

# the Lie derivative should be negative everywhere in the band c1_V < W < c2_V
X = power.domain.sample(20_000, np.random.default_rng(0))
W = net.forward(X)
lie = np.sum(net.input_gradient(X) * power.rhs()(X), axis=1)
band = (W > levels["c1_V"]) & (W < levels["c2_V"])
print("max Lie derivative in the band:", lie[band].max())
