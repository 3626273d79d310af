"""
Choosing parameters from an accuracy target
===========================================

Given the accuracy epsilon, the fraction alpha of the step spent on the
constrained force, and the target's conditioning, the calibrator returns
eta, R1, M_f and the ensemble size where gradient savings start.
"""

import json

from ensemble_langevin.calibrate import CalibratorInput, calibrate, solve_r1
from ensemble_langevin.core import c_d

for d in (1, 2, 5):
    r1 = solve_r1(0.3, d)
    print(f"d={d}: R1={r1:.4f}, C_d(R1)={c_d(r1, d):.6f}")

inp = CalibratorInput(alpha=1.0, d=2, kappa=17.0, mu=1.0, h=0.1, epsilon=0.5, r2=1.5, target="example1")
cal = calibrate(inp)
print(json.dumps(cal.as_dict(), indent=2, sort_keys=True))
print("sampler fields:", cal.sampler_fragment())

# the worst-case ensemble size bound is astronomically conservative; in
# practice a pilot run with the ratio sweep is the better guide
