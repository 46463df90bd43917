"""
Limit laws of the local-to-unity autoregression
===============================================

When rho = exp(gamma / tau) the scaled factor converges to an
Ornstein-Uhlenbeck process V, and tau (rho_hat - rho) converges to
int V dW / int V^2.  The samplers below approximate these functionals on
a grid of m steps.
"""

import numpy as np

from xsts.limitdist import (df_quantiles, ito_residual, ltu_quantile_table,
                            sample_ou_functionals)

m = 2000
s = sample_ou_functionals(gamma=-1.0, V0=1.0, sigma=1.0, grid_m=m, n_draws=5000, seed=0)
print("columns:", s.columns)
print("mean of V(1), should be exp(-1) =", np.exp(-1), ":", s.column("V1").mean())

# Ito's formula ties the functionals together; the residual is a
# discretization error of order m^-1/2
print("mean |Ito residual| =", np.mean(np.abs(ito_residual(s))), "vs", 5 / np.sqrt(m))

# at gamma = 0 and V(0) = 0 the ratio is the Dickey-Fuller law
probs = [0.025, 0.05, 0.5, 0.95, 0.975]
print("Dickey-Fuller quantiles:", df_quantiles(probs, grid_m=1000, n_draws=20_000))

# a quantile belt over gamma is what the confidence interval for rho inverts
table = ltu_quantile_table([-20.0, -5.0, 0.0, 5.0], probs, grid_m=500, n_draws=5000)
for g, q in zip(table.gamma_grid, table.quantiles):
    print(f"gamma = {g:6.1f}: 2.5% {q[0]:8.3f}   97.5% {q[-1]:8.3f}")
