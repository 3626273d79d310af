"""
Why the plain ensemble force needs constraints
==============================================

The unconstrained ensemble force divides by the density of a neighbour
pair. Its second moment has no finite limit, so the sample estimate keeps
growing as more pairs are drawn. Dropping the 1/p weight (the ablation)
gives an estimate that settles immediately.
"""

import numpy as np

from ensemble_langevin.diagnostics import blowup_probe

counts = (10**3, 10**4, 10**5, 10**6)

print("count      weighted      ablated")
for seed in range(3):
    w = blowup_probe(h=0.1, eta=0.1, sample_counts=counts, seed=seed)
    a = blowup_probe(h=0.1, eta=0.1, sample_counts=counts, seed=seed, ablate=True)
    for c, x, y in zip(counts, w, a):
        print(f"{c:>8d}  {x:12.4g}  {y:11.4g}")
    print(f"seed {seed}: growth x{w[-1] / w[0]:.1f} vs x{a[-1] / a[0]:.2f}\n")

# growth is driven by rare close pairs, so a single step can dip
# while the overall trend is up
