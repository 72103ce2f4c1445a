"""
Cutting frequency space into unit cubes
=======================================

A field on the periodic box splits into pieces psi(D - n) u, one per unit
cube of frequency space. The pieces add back to u exactly, and their
L^2 masses give the modulation-space norms.
"""

import numpy as np

from wienerlab.grid import make_grid
from wienerlab.norms import lp_norm, modulation_norm, sobolev_norm
from wienerlab.randomize import make_rough_data
from wienerlab.wiener import build_psi, cube_index_set, cube_l2_masses, wiener_decomposition

# a 1d box of side 2L = 8 sampled at 256 points
grid = make_grid(1, 256, 4)
psi = build_psi(0.25)
print(grid)
print("partition constants c1 = %.3f, c2 = %.3f" % (psi.c1, psi.c2))

###############################################################################
# Rough data: spectrum decaying like <xi>^{-(s_decay + 1/2 + 0.01)}, so the
# field sits just below H^{s_decay}.
phi = make_rough_data(grid, s_decay=0.5, seed=1, psi=psi)
for s in (0.0, 0.4, 0.6):
    print("H^%.1f norm: %.3f" % (s, sobolev_norm(phi, s)))

###############################################################################
# Every cube piece, summed, gives phi back.
pieces = list(wiener_decomposition(phi, psi))
total = sum(p.values for _, p in pieces)
err = np.linalg.norm(total - phi.frequency().values) / np.linalg.norm(phi.frequency().values)
print("%d cubes, reconstruction error %.1e" % (len(pieces), err))

###############################################################################
# Cube masses fall off with the cube index at the rate set by s_decay.
cubes = cube_index_set(grid)
masses = cube_l2_masses(phi, psi, cubes).ravel()
for n, m in list(zip(cubes.indices[:, 0], masses))[cubes.n_max::6]:
    print("cube %3d  mass %.2e" % (n, m))

###############################################################################
# M^{2,2}_0 is equivalent to L^2 with constants c1, c2.
l2 = lp_norm(phi, 2)
m22 = modulation_norm(phi, 2, 2, 0.0, psi)
print("L2 %.4f   M^{2,2}_0 %.4f   ratio %.3f" % (l2, m22, m22 / l2))
