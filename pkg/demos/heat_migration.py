"""SAIS on the heat equation over the whole real line.

The solution is a heat kernel centred at x = 10, but the initial
collocation points lie in [-6, 0] and the prior is a Gaussian centred at
the origin.  The residual is largest where the network has seen no points
yet, so each round SAIS draws new points further towards the bump.

    python3 demos/heat_migration.py
"""

import numpy as np

from fipinn.adaptive import run_fi_pinn
from fipinn.harness import load_preset, pretrain

cfg = load_preset("heat_unbounded_desk")
problem = cfg.build_problem()
net, ts = pretrain(cfg, problem, seed=0, log=print)
net, trace, ts = run_fi_pinn(problem, net, ts, cfg.adaptive(0), log=print)

print("\nround  new points  median x  median |x - 10|")
for k, pts in enumerate(trace.added, start=1):
    print(f"{k:>5}  {len(pts):>10}  {np.median(pts[:, 0]):>8.2f}  {np.median(np.abs(pts[:, 0] - 10)):>15.2f}")
print(f"stopped: {trace.stop_reason}")
