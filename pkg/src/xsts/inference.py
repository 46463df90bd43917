"""Confidence regions: Wald intervals and the Bonferroni union for unit roots.

The unit-root procedure has three steps:

1. a ``1 - alpha1`` interval ``[rho_L, rho_U]`` for the autoregressive
   coefficient, obtained by inverting ``tau (rho_hat - exp(gamma / tau))``
   against the local-to-unity quantile belt over a grid of ``gamma``;
2. for every ``rho`` on a grid of ``[rho_L, rho_U]``, the fixed-``rho``
   estimate ``theta_hat(rho)`` and its sandwich variance ``Sigma(rho)``;
3. the union over ``rho`` of the ``1 - alpha2`` Wald intervals.

Coverage is at least ``1 - alpha1 - alpha2`` asymptotically.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import norm

from .avar import _check_psd, sandwich
from .criteria import ParamVector, cs_jacobian, cs_scores
from .cross_section import ModelSpec, PanelData
from .errors import ConfigError, DomainError, XstsError
from .factor_process import FactorPath, LocalToUnity
from .limitdist import QuantileTable
from .solve import estimate_twostep, estimate_unit_root_ols

__all__ = [
    "ConfidenceRegion",
    "RhoInterval",
    "wald_ci",
    "rho_grid_ci",
    "fixed_rho_variance",
    "bonferroni_union_ci",
]


@dataclass
class ConfidenceRegion:
    lo: np.ndarray
    hi: np.ndarray
    nominal_level: float
    method: str = "wald"
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if np.any(self.lo > self.hi):
            raise DomainError("interval with lo > hi")
        if not 0.0 < self.nominal_level < 1.0:
            raise DomainError("nominal level must lie in (0, 1)")

    def covers(self, value) -> np.ndarray:
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return (self.lo <= value) & (value <= self.hi)

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(),
                "nominal_level": self.nominal_level, "method": self.method,
                "details": self.details}


def wald_ci(theta_hat, omega_theta, n: int, level: float = 0.95) -> ConfidenceRegion:
    """Coordinate-wise ``theta_hat_j +- z_{(1+level)/2} sqrt(Omega_theta_jj / n)``."""
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    om = _check_psd(np.atleast_2d(omega_theta), "Omega_theta")
    var = np.clip(np.diag(om), 0.0, None)
    half = norm.ppf(0.5 + level / 2.0) * np.sqrt(var / n)
    details = {}
    if np.any(var == 0.0):
        details["degenerate"] = np.flatnonzero(var == 0.0).tolist()
    return ConfidenceRegion(theta_hat - half, theta_hat + half, level, "wald", details)


class RhoInterval(NamedTuple):
    lower: float
    upper: float
    accepted_gamma: np.ndarray
    fallback: bool


def rho_grid_ci(factors: FactorPath, alpha1: float, table: QuantileTable,
                rho_hat: Optional[float] = None) -> RhoInterval:
    """``1 - alpha1`` interval for a local-to-unity coefficient by grid inversion.

    ``gamma`` is accepted when ``tau (rho_hat - exp(gamma / tau))`` lies between
    the ``alpha1 / 2`` and ``1 - alpha1 / 2`` quantiles of its limit law at that
    ``gamma``.  The interval is the hull of ``exp(gamma / tau)`` over accepted
    points; an empty acceptance set falls back to the whole grid with a
    warning.
    """
    if not isinstance(factors.regime, LocalToUnity):
        raise ConfigError("rho_grid_ci needs a local-to-unity path")
    if not 0.0 < alpha1 < 1.0:
        raise DomainError("alpha1 must lie in (0, 1)")
    tau = factors.tau
    if rho_hat is None:
        rho_hat = estimate_unit_root_ols(factors)
    grid = table.gamma_grid
    if rho_hat <= 0 or not grid[0] <= tau * math.log(rho_hat) <= grid[-1]:
        raise ConfigError(
            f"gamma grid [{grid[0]}, {grid[-1]}] does not cover rho_hat = {rho_hat:.6g}")
    lo, hi = table.bounds(alpha1)
    stat = tau * (rho_hat - np.exp(grid / tau))
    accepted = grid[(lo <= stat) & (stat <= hi)]
    if accepted.size == 0:
        warnings.warn("no gamma accepted; falling back to the full grid", RuntimeWarning)
        return RhoInterval(math.exp(grid[0] / tau), math.exp(grid[-1] / tau), accepted, True)
    return RhoInterval(math.exp(accepted.min() / tau), math.exp(accepted.max() / tau),
                       accepted, False)


def fixed_rho_variance(panel: PanelData, phi: ParamVector, spec: ModelSpec) -> np.ndarray:
    """Sandwich ``A(rho)^-1 Omega_y(rho) A(rho)^-1`` treating ``rho`` as known."""
    a_yt, _ = cs_jacobian(panel, phi, spec)
    rows, cs_m, J, W = cs_scores(panel, phi, spec)
    if cs_m is not None:
        om_y = J.T @ W @ (cs_m.T @ cs_m / panel.n) @ W.T @ J
    else:
        om_y = rows.T @ rows / panel.n
    return sandwich(a_yt, om_y)


def bonferroni_union_ci(panel: PanelData, factors: FactorPath, spec: ModelSpec,
                        alpha1: float, alpha2: float, table: QuantileTable,
                        rho_grid_resolution: int = 25) -> ConfidenceRegion:
    """Union over ``rho`` in ``[rho_L, rho_U]`` of fixed-``rho`` Wald intervals.

    The per-coordinate region is the hull of the per-``rho`` intervals; the
    audit trail of every grid point is kept in ``details["audit"]``.  Grid
    points whose inner maximization fails are skipped with a warning.
    """
    if rho_grid_resolution < 10:
        raise ConfigError("rho grid needs at least 10 points")
    rho_hat = estimate_unit_root_ols(factors)
    rci = rho_grid_ci(factors, alpha1, table, rho_hat)
    grid = np.linspace(rci.lower, rci.upper, rho_grid_resolution)
    if rci.lower < rho_hat < rci.upper:
        grid = np.sort(np.append(grid, rho_hat))
    audit, skipped = [], []
    los, his = [], []
    for rho in grid:
        try:
            est = estimate_twostep(panel, rho, spec)
            if not est.converged:
                raise XstsError("inner maximization did not converge")
            sigma = fixed_rho_variance(panel, est.phi_hat, spec)
            ci = wald_ci(est.theta_hat, sigma, panel.n, 1.0 - alpha2)
        except (XstsError, np.linalg.LinAlgError) as exc:
            skipped.append(float(rho))
            warnings.warn(f"rho={rho:.6g} skipped: {exc}", RuntimeWarning)
            continue
        los.append(ci.lo)
        his.append(ci.hi)
        audit.append({"rho": float(rho), "theta_hat": est.theta_hat.tolist(),
                      "lo": ci.lo.tolist(), "hi": ci.hi.tolist()})
    if not los:
        raise XstsError("no rho grid point produced an interval")
    details = {
        "rho_hat": rho_hat,
        "rho_L": rci.lower,
        "rho_U": rci.upper,
        "rho_fallback": rci.fallback,
        "alpha1": alpha1,
        "alpha2": alpha2,
        "audit": audit,
        "skipped": skipped,
    }
    return ConfidenceRegion(np.min(los, axis=0), np.max(his, axis=0),
                            1.0 - alpha1 - alpha2, "bonferroni_union", details)
