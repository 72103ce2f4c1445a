"""
Strichartz norms of the free flow
=================================

For admissible (q, r) the space-time norm ||S(t)phi||_{L^q_t L^r_x} is
controlled by ||phi||_2 and is invariant under the Schrodinger scaling.
After randomization the local-in-time norm also has a Gaussian tail whose
constant grows as the window shrinks, c(T) ~ T^{-2/q}.
"""

import math

import numpy as np

from wienerlab.grid import make_grid
from wienerlab.norms import is_admissible
from wienerlab.probe import ExperimentManifest, deterministic_strichartz, strichartz_T_scaling
from wienerlab.randomize import gaussian_data

print("(6, 6) admissible in 1d:", is_admissible(6, 6, 1), "  (4, 4):", is_admissible(4, 4, 1))

###############################################################################
# Scaling phi -> lam^{1/2} phi(lam x), T -> T / lam^2 leaves the ratio fixed.
grid = make_grid(1, 2048, 32)
for lam in (0.5, 1.0, 2.0):
    phi = gaussian_data(grid, width=1 / lam, amplitude=math.sqrt(lam))
    ratio = deterministic_strichartz(phi, 6, 6, 0.5 / lam**2, 400)
    print("lam = %.1f  ||S(t)phi||_{L^6 L^6} / ||phi||_2 = %.5f" % (lam, ratio))

###############################################################################
# Tail constant of the randomized local norm against T (a short run; the
# acceptance test uses 2000 trials and five T values).
m = ExperimentManifest(grid={"d": 1, "M": 128, "L": 8.0}, phi={"kind": "gaussian", "width": 2.0}, trials=1000)
rep = strichartz_T_scaling(6, 6, [0.05, 0.2, 0.8], m, n_steps=32, max_dt=4e-3)
for T, c in zip(rep.T, rep.c_hat):
    print("T = %.2f  c_hat = %.3f" % (T, c))
print("slope of log c on log T: %.3f (expected %.3f)" % (rep.slope, rep.expected))
