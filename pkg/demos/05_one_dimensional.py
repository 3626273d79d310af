"""
One-dimensional standard normal
===============================

In one dimension the exact W1 distance to the reference is cheap, so
it is easy to watch the constrained ensemble converge from a wide start.
"""

import numpy as np

from ensemble_langevin.diagnostics import ratio_series, w1_1d
from ensemble_langevin.samplers import cenlmc_run, lmc_run
from ensemble_langevin.state import SamplerConfig
from ensemble_langevin.targets import direct_samples, quadratic_target, scaled_normal_initial

cfg = SamplerConfig(h=0.01, n=5000, eta=0.05, r1=0.15, r2=0.1, n_star=50, m_f=20.0, m_iters=200, seed=0)
t = quadratic_target(1)
init = scaled_normal_initial(1, 2.0)
ref = direct_samples(t, 0, cfg.n)

x = cenlmc_run(cfg, t, init)
z = lmc_run(cfg, t, init)
r = ratio_series(x.fallback_flags)
for m in (0, 50, 100, 150, 200):
    print(f"m={m:3d}  W1 ensemble {w1_1d(x.at(m), ref):.4f}  lmc {w1_1d(z.at(m), ref):.4f}"
          + (f"  R_m {r[m - 1]:.3f}" if 0 < m <= len(r) else ""))
print("final variance", np.var(x.positions))
