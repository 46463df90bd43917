"""
Two-step and joint estimation in the stationary model
=====================================================

A panel of n units is observed for T periods.  Every period carries an
aggregate shock nu_t that follows an AR(1) with coefficient rho, and the
shock enters the cross-section through the loading lambda(rho) = 1/(1-rho):

    y_it = beta x_it + lambda(rho) nu_t + eps_it

The time series of nu is observed separately over tau periods.
"""

import numpy as np

from xsts import ModelSpec, simulate_panel, simulate_stationary
from xsts.avar import (asymptotic_variance_theta, hessian_blocks, omega_estimates,
                       partitioned_inverse, sandwich, twostep_se)
from xsts.criteria import scores
from xsts.factor_process import Backwards
from xsts.inference import wald_ci
from xsts.solve import estimate_joint, estimate_timeseries, estimate_twostep

n, tau, T = 2000, 500, 2
spec = ModelSpec()

# the factor series ends at the last panel period (upsilon = 1)
path = simulate_stationary(0.5, 1.0, tau, Backwards(1.0, 0, T), seed=1)
panel = simulate_panel(spec, 1.0, path, 0.5, n, T, seed=2)
print("true shocks:", path.window(1, T))

# first step: AR(1) estimate from the time series alone
rho_tilde, _ = estimate_timeseries(path)
print("rho_tilde =", rho_tilde)

# second step: maximize the cross-section likelihood at rho_tilde
two = estimate_twostep(panel, rho_tilde, spec, tau=tau)
print("two-step theta =", two.theta_hat)

# the joint estimator solves both score equations at once; here the time
# series does not involve theta, so both give the same answer
joint = estimate_joint(panel, path, spec)
print("joint theta    =", joint.theta_hat)

# variance of theta_hat: the first-stage error in rho_tilde adds a term
# proportional to kappa = n / tau
blocks = hessian_blocks(panel, path, joint.phi_hat, spec)
om = omega_estimates(scores(panel, path, joint.phi_hat, spec), spec, blocks)
om_theta = asymptotic_variance_theta(partitioned_inverse(blocks), om, blocks.kappa)
ai = np.linalg.inv(blocks.A_nu_rho)
cov2, se2 = twostep_se(blocks.A_y_theta, blocks.A_y_rho, om.omega_y,
                       ai @ om.omega_nu1 @ ai.T, n, tau)
naive = np.sqrt(np.diag(sandwich(blocks.A_y_theta, om.omega_y)) / n)
print("kappa =", blocks.kappa)
print("se ignoring the first step:", naive)
print("se with the first step:    ", se2)

ci = wald_ci(joint.theta_hat, om_theta, n)
for name, lo, hi in zip(["beta", "nu_1", "nu_2"], ci.lo, ci.hi):
    print(f"95% interval for {name}: [{lo:.4f}, {hi:.4f}]")
