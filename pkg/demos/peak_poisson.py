"""One seed of the reduced peak-Poisson comparison, printed round by round.

The network is pretrained once.  SAIS then runs the adaptive loop, and
Uniform and RAR repeat it from the same starting network with the same
number of new points per round.

    python3 demos/peak_poisson.py [seed]
"""

import sys
from dataclasses import replace

from fipinn.harness import load_preset, run_comparison

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = replace(load_preset("peak_poisson_desk"), seeds=[seed], out=f"runs/demo_peak_{seed}")
res = run_comparison(cfg, ("sais", "uniform", "rar"), log=print)

print(f"\n{'round':>5} {'points':>7} " + " ".join(f"{s + ' p_hat':>12} {s + ' L2':>10}" for s in res.traces))
sais_trace = res.traces["sais"][0]
for k, rec in enumerate(sais_trace.records):
    row = f"{rec.round:>5} {rec.n_points:>7} "
    for s in res.traces:
        r = res.traces[s][0].records[k]
        row += f"{r.p_hat:>12.3e} {r.rel_l2:>10.3e} "
    print(row)
print(f"\nfinal relative L2: " + ", ".join(f"{s} {res.median(s):.3e}" for s in res.traces))
print(f"outputs in {cfg.out}")
