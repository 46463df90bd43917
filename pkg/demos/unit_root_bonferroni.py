"""
Confidence intervals when the factor has a unit root
====================================================

With rho close to one the estimate of theta has a non-normal limit, so the
usual Wald interval is replaced by a union:

1. an interval [rho_L, rho_U] for rho from the local-to-unity quantile belt,
2. a Wald interval for theta at every rho on a grid of [rho_L, rho_U],
3. the union of those intervals.

By Bonferroni the union covers with probability at least 1 - alpha1 - alpha2.
"""

import numpy as np

from xsts import ModelSpec, simulate_local_to_unity, simulate_panel
from xsts.cross_section import linear_loading
from xsts.inference import bonferroni_union_ci
from xsts.limitdist import ltu_quantile_table

n, tau = 2500, 50
spec = ModelSpec("unit_root", linear_loading())  # lambda(rho) = rho
path = simulate_local_to_unity(gamma=0.0, sigma_eta=1.0, tau=tau, nu0=1.0, seed=3)
panel = simulate_panel(spec, 1.0, 1.0, path.coefficient, n, 1, seed=4)

table = ltu_quantile_table(np.arange(-60.0, 20.5, 0.5), grid_m=500, n_draws=5000)
ci = bonferroni_union_ci(panel, path, spec, alpha1=0.05, alpha2=0.05, table=table)

d = ci.details
print(f"rho_hat = {d['rho_hat']:.4f}, interval for rho: [{d['rho_L']:.4f}, {d['rho_U']:.4f}]")
for row in d["audit"][::6]:
    print(f"  rho = {row['rho']:.4f}: beta in [{row['lo'][0]:.4f}, {row['hi'][0]:.4f}]")
print(f"union interval for beta: [{ci.lo[0]:.4f}, {ci.hi[0]:.4f}]")
print(f"union interval for nu0:  [{ci.lo[1]:.4f}, {ci.hi[1]:.4f}]")
