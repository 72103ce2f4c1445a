"""
Gaussian tails of randomized norms
==================================

Multiplying each cube piece by an independent subgaussian coefficient
makes every norm of the result concentrate: P(||phi^omega|| > lambda)
decays like exp(-c lambda^2). We see it first on plain random sums
(Khintchine) and then on the H^s norm of randomized rough data.
"""

import numpy as np

from wienerlab.probe import ExperimentManifest, khintchine_moments, modulus_tail, tail_experiment
from wienerlab.randomize import CoeffDistribution, verify_subgaussian

###############################################################################
# The three coefficient laws and their subgaussian constants.
for kind in ("gaussian", "bernoulli", "uniform"):
    rep = verify_subgaussian(CoeffDistribution(kind))
    print("%-9s declared c = %.3f, estimated %.3f (%s)" % (kind, CoeffDistribution(kind).c_sg, rep.c_hat, rep.method))

###############################################################################
# Khintchine: moments of sum g_n c_n grow like sqrt(p), never faster.
tab = khintchine_moments(CoeffDistribution("bernoulli"), np.ones(16), (2, 4, 8, 16), 50_000)
for row in tab.rows():
    print("p = %4.1f  ||S||_p / ||c||_2 = %.3f +- %.3f" % (row["p"], row["ratio"], row["se"]))
print("growth exponent alpha = %.3f (sqrt growth is 0.5)" % tab.alpha)

###############################################################################
# Tail of the H^0.8 norm of randomized data, normalized by the deterministic
# norm. log P is linear in lambda^2 over the fitted band.
m = ExperimentManifest(
    grid={"d": 1, "M": 128, "L": 2.0}, phi={"kind": "rough", "s_decay": 0.8, "seed": 0},
    statistic={"kind": "HsNorm", "s": 0.8}, trials=5000,
)
curve = tail_experiment(None, m)
print(curve.fit_record())

###############################################################################
# With phi on a single cube the statistic is |g_0| times a constant, and the
# curve must match the modulus tail of one coefficient.
m.phi = {"kind": "plateau", "width": 0.1}
m.lambda_grid = list(np.linspace(0, 2.5, 6))
curve = tail_experiment(None, m)
for lam, p, lo, hi, ex in zip(curve.lambda_grid, curve.exceed_prob, curve.ci_lo, curve.ci_hi,
                              modulus_tail(CoeffDistribution(), curve.lambda_grid)):
    print("lambda %.1f  p_hat %.4f  [%.4f, %.4f]  exact %.4f" % (lam, p, lo, hi, ex))
