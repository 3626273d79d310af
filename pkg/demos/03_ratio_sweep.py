"""
Gradient savings grow with the ensemble size
============================================

R_m is the fraction of force evaluations that fell back to the true
gradient. Larger ensembles have more neighbours within R2, so fewer
particles fall back.
"""

from pathlib import Path

from ensemble_langevin.config import load_config
from ensemble_langevin.experiments import run_ratio_sweep

here = Path(__file__).parent
cfg = load_config(here / "configs" / "example1.json")
cfg = cfg.with_overrides(m_iters=50)

curves = run_ratio_sweep(cfg, [2000, 6000, 10000], out_dir=here / "out" / "ratio_sweep", workers=4)
print("   m   " + "".join(f"N={n:<8d}" for n in curves))
for m in (1, 5, 10, 20, 30, 40, 50):
    print(f"{m:4d}   " + "".join(f"{curves[n][m - 1]:<10.3f}" for n in curves))
