"""Numerical checks of the theory at toy scale.

Run: python3 demos/01_theory.py

1. The tabular CDC operator is a gamma-contraction on random MDPs.
2. The expected overestimation of a max over m partition cells matches its
   closed form, and the penalised estimate sits below the unpenalised one.
3. KL-regularised policy improvement has closed-form optima that a brute
   force search over the simplex agrees with.
"""

import numpy as np

from cdcrl.seeding import substream
from cdcrl.verify import (contraction_suite, lemma1_check, oe_closed_form, oe_max_expectation,
                          oe_simulation, random_kl_instance)

rows = contraction_suite(seed=0, n_mdps=12, pairs=10)
print("contraction: worst ratio - gamma over 12 MDPs =",
      round(max(r["ratio"] - r["gamma"] for r in rows), 4))

rng = substream(0, "verify", 99)
print("\nm   alpha  closed form   Monte Carlo")
for m in (1, 2, 5, 20):
    for alpha in (0.0, 0.2):
        mc, se = oe_max_expectation(1.0, m, alpha, 200_000, rng)
        print(f"{m:<3} {alpha:<6} {oe_closed_form(1.0, m, alpha):.5f}       {mc:.5f} +- {se:.5f}")

# a modest penalty step lowers the estimated max, with m = 10 cells
r = oe_simulation(eta=1.0, mu=0.5, alpha=0.1, L1=1.0, m=10, trials=200_000, rng=rng)
print(f"\npenalised OE {r.cdc_mean:.4f} vs unpenalised {r.baseline_mean:.4f}")

q, pb, lam = random_kl_instance(rng)
res = lemma1_check(q, pb, lam)
print("\nbehaviour policy     ", np.round(pb, 3))
print("forward-KL optimum   ", np.round(res.forward_closed, 3))
print("reverse-KL optimum   ", np.round(res.reverse_closed, 3))
print("max gap to brute force", f"{res.max_dev:.1e}")
