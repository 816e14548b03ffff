"""How the rotation angle trades one attack against the other.

d1 is the error S1 causes in the first extraction round and d2 the one
attributed to S2 away from pi/4. Their sum is fixed at 1/2, so the best the
parties can do is the crossing point where both equal 1/4. The last two
columns come from exact branch enumeration, not from the closed forms.
"""
import math

import numpy as np

from qkdlab.adversary import Strategy
from qkdlab.analysis import SWEEP_COLUMNS, disturbance_profile, solve_theta0, sweep

grid = np.linspace(0, math.pi / 2, 9)
res = sweep(grid)
print(" ".join(f"{c:>26}" for c in SWEEP_COLUMNS))
for row in res.rows:
    print(" ".join(f"{v:26.12f}" for v in row.as_tuple()))

t0 = solve_theta0()
print(f"\ncrossing at theta0 = {t0:.15f} (pi/8 = {math.pi / 8:.15f})")

# S2 at theta0 is no longer silent; key-averaged error per round
print("S2 per-round error at theta0:", np.round(disturbance_profile(Strategy.S2, t0, 6), 5))
