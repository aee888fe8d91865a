"""
Weights, characteristics, and sharp exponents
=============================================

Power weights on the interval give a dial for the Muckenhoupt
characteristic; weighted operator norms are expected to grow like a
power of it.  The exponent calculators supply that power in closed form,
and the envelope fit measures how tight the prediction is.
"""

import math

import numpy as np

from sparsedom.dyadic import Grid, grid_norm
from sparsedom.maximal import scalar_maximal
from sparsedom.transfer import HaarTransform, weighted_transfer_experiment
from sparsedom.weights import (
    bht_region,
    ellt_exponent,
    muckenhoupt_constant,
    power_weight,
    transfer_exponent,
)

grid = Grid(1, 6)

# ---------------------------------------------------------------------
# the characteristic of w(x) = x^a grows smoothly from 1 as a rises
# ---------------------------------------------------------------------
print("power weight characteristics ([w] for p=2, r=1, s=inf):")
for a in (0.0, 0.15, 0.3, 0.45):
    w = power_weight(grid, a)
    const = muckenhoupt_constant([w], (2.0,), (1.0,), math.inf, grid)
    print(f"  a={a:.2f}: [w] = {const:.4f}")

# the predicted growth exponent for the maximal operator at p=2, r=1
gamma = transfer_exponent([2.0], 1.0, [1.0], math.inf)
print(f"\npredicted exponent gamma = {gamma}")

# a quick look at the weighted maximal ratio against the prediction
w = power_weight(grid, 0.45)
const = muckenhoupt_constant([w], (2.0,), (1.0,), math.inf, grid)
f = 1.0 / w
ratio = grid_norm(grid, scalar_maximal(grid, [f], [1.0]), 2.0, weight=w) / grid_norm(
    grid, f, 2.0, weight=w
)
print(f"maximal ratio at a=0.45: {ratio:.4f} vs [w]^gamma = {const ** gamma:.4f}")

# ---------------------------------------------------------------------
# the full envelope experiment: one fitted constant, measured slope
# ---------------------------------------------------------------------
res = weighted_transfer_experiment(
    HaarTransform.random(grid, seed=4), grid, [2.0], ps=(2.0,), q=1.0
)
print(f"\nweighted Haar experiment: fitted C = {res['fitted_constant']:.4f}, "
      f"log-log slope {res['slope']:.3f} (allowed {res['gamma'] + 0.1:g}), "
      f"passed={res['passed']}")
print("  a    [w]      ratio    C*[w]^gamma")
for row in res["rows"][::3]:
    print(f"  {row['a']:.2f} {row['constant']:8.4f} {row['ratio']:8.4f} "
          f"{row['bound']:10.4f}")

# ---------------------------------------------------------------------
# sequence-valued sharp exponents and the bilinear region
# ---------------------------------------------------------------------
got = ellt_exponent((2.0, 3.0), (1.0, 1.0), 1.0, (2.0, 2.0))
print(f"\nell^t exponent for p=(2,3): {got} "
      f"(= max of the conjugates and the aggregate)")

for triple in ((2.0, 2.0, 2.0), (10.0 / 9.0, 10.0 / 9.0, 10.0)):
    member, out = bht_region(*triple)
    tag = f"witness theta={tuple(round(t, 3) for t in out)}" if member else f"sum {out['sum']:.3f} >= 2"
    print(f"region check {triple}: member={member}, {tag}")
