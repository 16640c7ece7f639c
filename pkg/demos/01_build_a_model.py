"""From a transition table to drift, diffusion matrix and jump rates.

A model is just a list of (jump vector, normalized rate) pairs. Everything
else is derived mechanically: the drift b = sum_l l * beta_l, the diffusion
matrix Sigma = sum_l beta_l l l^T with its lower-triangular square root, and
the integer-state event rates N * beta_l(z / N).
"""

import numpy as np

from epidiff import (diffusion_matrix, diffusion_sqrt, drift, jump_rates,
                     models)

table = models.sir_table()
theta = np.array([1.5, 3.0])         # (R0, d): transmission 0.5/day, recovery 1/3
y = (0.7, 0.1)                       # proportions (s, i)

print("single-outbreak model:", [tr.name for tr in table.transitions])
print("jumps:\n", table.jumps)
print("drift b(y)          =", drift(table, 0.0, theta, y))
sigma = diffusion_matrix(table, 0.0, theta, y)
print("diffusion Sigma(y)  =\n", sigma)
low = diffusion_sqrt(sigma)
print("lower factor sigma  =\n", low)
print("factor check |ss^T - Sigma| =", np.abs(low @ low.T - sigma).max())

N = 1000
z = np.array([700, 100])
print(f"\ninteger-state rates at z={z}, N={N}:", jump_rates(table, 0.0, theta, N, z))
print("(0.5 * 700 * 100 / 1000 = 35 infections/day, 100/3 recoveries/day)")

sirs = models.sirs_table()
th = sirs.params.values
print("\nseasonal model:", [tr.name for tr in sirs.transitions])
t_peak = th[sirs.params.index("T_per")] / 4.0
print("drift in mid-winter vs mid-summer at the same state:")
print("  t = T/4  ->", drift(sirs, t_peak, th, (0.65, 0.002)))
print("  t = 3T/4 ->", drift(sirs, 3 * t_peak, th, (0.65, 0.002)))

# the horizon rule used by the single-outbreak study: first time after the
# peak that the deterministic infected proportion drops below 1%
for (r0, d) in [(1.5, 3.0), (1.5, 7.0), (5.0, 3.0), (5.0, 7.0)]:
    T = models.choose_horizon(table, np.array([r0, d]), np.array([0.99, 0.01]))
    print(f"horizon rule: (R0, d) = ({r0}, {d}) -> T = {T:.1f} days")
