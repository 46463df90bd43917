"""Aggregate shock process: simulation, variance kernel and exact identities.

The factor ``nu_t`` is an AR(1).  In the stationary regime
``nu_{t+1} = rho * nu_t + eta_{t+1}`` with ``|rho| < 1``; in the
local-to-unity regime the coefficient is ``exp(gamma / tau)`` and the initial
level is ``sqrt(tau) * nu0``.

A :class:`FactorPath` stores ``tau + 1`` levels ``nu_{tau0}, ..., nu_{tau0+tau}``
together with the ``tau`` innovations ``eta_{tau0+1}, ..., eta_{tau0+tau}``
that generated them.  The first level is the initial condition; ``values``
are the ``tau`` observations proper.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.signal import lfilter

from ._rng import as_generator
from .errors import DomainError, RegimeError

__all__ = [
    "Stationary",
    "LocalToUnity",
    "Fixed",
    "Backwards",
    "FactorPath",
    "gaussian_innovations",
    "student_t_innovations",
    "simulate_stationary",
    "simulate_local_to_unity",
    "variance_kernel",
    "kernel_sum",
    "mixingale_bound",
    "mixingale_mc",
    "summation_identity_terms",
    "check_summation_identity",
]

# unit-variance sampler: (rng, size) -> array
InnovationSampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class Stationary:
    rho: float

    @property
    def coefficient(self) -> float:
        return float(self.rho)


@dataclass(frozen=True)
class LocalToUnity:
    gamma: float
    tau: int

    @property
    def coefficient(self) -> float:
        return math.exp(self.gamma / self.tau)


Regime = Union[Stationary, LocalToUnity]


@dataclass(frozen=True)
class Fixed:
    """Time series starts at ``tau0 = tau0f``."""

    tau0f: int = 0

    def tau0(self, tau: int) -> int:
        return int(self.tau0f)


@dataclass(frozen=True)
class Backwards:
    """Time series extends into the past as it grows.

    ``tau0 = round(-upsilon * tau) + tau0f + T`` so that with ``upsilon = 1``
    and ``tau0f = 0`` the series ends exactly at the last panel period ``T``.
    """

    upsilon: float
    tau0f: int
    T: int

    def __post_init__(self):
        if not 0.0 <= self.upsilon <= 1.0:
            raise DomainError("upsilon must lie in [0, 1]")
        if self.T < 1:
            raise DomainError("T must be positive")

    def tau0(self, tau: int) -> int:
        return int(round(-self.upsilon * tau)) + int(self.tau0f) + int(self.T)


StartSpec = Union[Fixed, Backwards]


def gaussian_innovations(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.standard_normal(size)


def student_t_innovations(df: float) -> InnovationSampler:
    """Unit-variance Student-t sampler; needs ``df > 2`` for a finite 2+delta moment."""
    if df <= 2:
        raise DomainError("student-t innovations need df > 2")
    scale = math.sqrt((df - 2.0) / df)

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        return scale * rng.standard_t(df, size)

    return sample


@dataclass
class FactorPath:
    levels: np.ndarray
    innovations: np.ndarray
    tau0: int
    regime: Regime
    sigma_eta: float = 1.0
    nu0: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.innovations = np.asarray(self.innovations, dtype=float)
        if self.levels.ndim != 1 or self.levels.size < 2:
            raise DomainError("a factor path needs at least two levels")
        if self.innovations.shape != (self.levels.size - 1,):
            raise DomainError("need exactly one innovation per transition")

    @classmethod
    def from_levels(cls, levels, regime: Regime, tau0: int = 0,
                    sigma_eta: float = 1.0, innovations=None, nu0=None):
        """Wrap observed levels ``nu_{tau0}, ..., nu_{tau0+tau}``.

        Innovations default to the recursion residuals implied by ``regime``.
        """
        levels = np.asarray(levels, dtype=float)
        if innovations is None:
            innovations = levels[1:] - regime.coefficient * levels[:-1]
        return cls(levels, innovations, tau0, regime, sigma_eta, nu0)

    @property
    def tau(self) -> int:
        return self.levels.size - 1

    @property
    def values(self) -> np.ndarray:
        """Observations ``nu_t`` for ``t = tau0+1, ..., tau0+tau``."""
        return self.levels[1:]

    @property
    def lagged(self) -> np.ndarray:
        return self.levels[:-1]

    @property
    def times(self) -> np.ndarray:
        """Calendar index of every stored level, starting at ``tau0``."""
        return np.arange(self.tau0, self.tau0 + self.tau + 1)

    @property
    def coefficient(self) -> float:
        return self.regime.coefficient

    def covers(self, first: int, last: int) -> bool:
        return self.tau0 + 1 <= first and last <= self.tau0 + self.tau

    def window(self, first: int, last: int) -> np.ndarray:
        """Levels for calendar periods ``first..last`` inclusive."""
        if not self.covers(first, last):
            raise DomainError(
                f"periods {first}..{last} outside observed window "
                f"{self.tau0 + 1}..{self.tau0 + self.tau}")
        return self.levels[first - self.tau0:last - self.tau0 + 1].copy()

    def recursion_residual(self) -> float:
        """Max abs difference between stored and reconstructed levels."""
        a = self.coefficient
        rebuilt = lfilter([1.0], [1.0, -a], self.innovations,
                          zi=[a * self.levels[0]])[0]
        return float(np.max(np.abs(rebuilt - self.values)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "nu", "eta"])
            w.writerow([self.tau0, repr(float(self.levels[0])), ""])
            for t, nu, eta in zip(self.times[1:], self.values, self.innovations):
                w.writerow([int(t), repr(float(nu)), repr(float(eta))])

    @classmethod
    def from_csv(cls, path, regime: Regime, sigma_eta: float = 1.0, nu0=None):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if len(rows) < 2:
            raise DomainError(f"{path}: need at least two rows")
        t = np.array([int(r["t"]) for r in rows])
        if np.any(np.diff(t) != 1):
            raise DomainError(f"{path}: t column must be consecutive")
        levels = np.array([float(r["nu"]) for r in rows])
        eta = np.array([float(r["eta"]) for r in rows[1:]])
        return cls(levels, eta, int(t[0]), regime, sigma_eta, nu0)


def _recurse(coef: float, start: float, eta: np.ndarray) -> np.ndarray:
    out = np.empty(eta.size + 1)
    out[0] = start
    out[1:] = lfilter([1.0], [1.0, -coef], eta, zi=[coef * start])[0]
    return out


def simulate_stationary(rho: float, sigma_eta: float, tau: int,
                        start: StartSpec = Fixed(0), init="stationary",
                        seed=0, innovations: InnovationSampler = gaussian_innovations
                        ) -> FactorPath:
    """Simulate a stationary AR(1) factor path.

    Parameters
    ----------
    rho : float
        Autoregressive coefficient, ``|rho| < 1``.
    sigma_eta : float
        Innovation standard deviation.
    tau : int
        Number of time-series observations.
    start : Fixed or Backwards
        Start-time convention fixing ``tau0``.
    init : "stationary" or float
        ``"stationary"`` draws ``nu_{tau0}`` from ``N(0, sigma^2 / (1 - rho^2))``;
        a float fixes the initial level.
    seed : int or numpy.random.Generator
    innovations : callable
        Unit-variance sampler ``(rng, size) -> array``; scaled by ``sigma_eta``.
    """
    if abs(rho) >= 1:
        raise RegimeError(
            f"|rho| = {abs(rho)} >= 1 is not stationary; "
            "use simulate_local_to_unity for near-unit-root factors")
    if tau < 2:
        raise DomainError("tau must be at least 2")
    if sigma_eta <= 0:
        raise DomainError("sigma_eta must be positive")
    rng = as_generator(seed)
    if isinstance(init, str):
        if init != "stationary":
            raise DomainError(f"unknown init {init!r}")
        start_level = rng.standard_normal() * sigma_eta / math.sqrt(1.0 - rho * rho)
    else:
        start_level = float(init)
    eta = sigma_eta * np.asarray(innovations(rng, tau), dtype=float)
    levels = _recurse(rho, start_level, eta)
    return FactorPath(levels, eta, start.tau0(tau), Stationary(float(rho)), sigma_eta)


def simulate_local_to_unity(gamma: float, sigma_eta: float, tau: int,
                            nu0: float = 0.0, seed=0,
                            innovations: InnovationSampler = gaussian_innovations
                            ) -> FactorPath:
    """Simulate ``nu_{t+1} = exp(gamma / tau) nu_t + eta_{t+1}`` from ``sqrt(tau) nu0``.

    The series starts at ``tau0 = 0``.
    """
    if tau < 2:
        raise DomainError("tau must be at least 2")
    if sigma_eta <= 0:
        raise DomainError("sigma_eta must be positive")
    rng = as_generator(seed)
    regime = LocalToUnity(float(gamma), int(tau))
    eta = sigma_eta * np.asarray(innovations(rng, tau), dtype=float)
    levels = _recurse(regime.coefficient, math.sqrt(tau) * nu0, eta)
    return FactorPath(levels, eta, 0, regime, sigma_eta, float(nu0))


def variance_kernel(gamma: float, sigma: float, r: float) -> float:
    """Variance kernel ``sigma^2 (1 - exp(-2 r gamma)) / (2 gamma)`` of the
    exponentially weighted innovations, with ``Omega(0) = 0``."""
    if not 0.0 <= r <= 1.0:
        raise DomainError("r must lie in [0, 1]")
    s2 = sigma * sigma
    if abs(gamma) < 1e-8:
        return s2 * r * (1.0 - r * gamma + 2.0 / 3.0 * (r * gamma) ** 2)
    return s2 * -math.expm1(-2.0 * r * gamma) / (2.0 * gamma)


def kernel_sum(path: FactorPath, r: float, s: float = 0.0) -> float:
    """``tau^-1 sum_{t=[tau s]+1}^{[tau r]} exp(-2 gamma t / tau) eta_t^2``.

    The sample counterpart of ``variance_kernel(r) - variance_kernel(s)``.
    """
    if not isinstance(path.regime, LocalToUnity):
        raise RegimeError("kernel_sum needs a local-to-unity path")
    if not 0.0 <= s <= r <= 1.0:
        raise DomainError("need 0 <= s <= r <= 1")
    tau, gamma = path.tau, path.regime.gamma
    lo, hi = int(math.floor(tau * s)), int(math.floor(tau * r))
    t = np.arange(lo + 1, hi + 1)
    eta = path.innovations[lo:hi]
    return float(np.sum(np.exp(-2.0 * gamma * t / tau) * eta * eta) / tau)


def mixingale_bound(rho: float, s: int) -> float:
    """Squared L2 bound on the conditional mean of the AR(1) Gaussian score.

    For the stationary AR(1) with unit innovations and a single panel period,
    ``|rho|^|s| (rho^(2+2|s|) + 1) / (1 - rho^2) + |rho|^|s| rho^(2+2|s|) / (1 - rho^2)``.
    """
    if abs(rho) >= 1:
        raise DomainError("mixingale bound needs |rho| < 1")
    if s >= 0:
        raise DomainError("s must be a negative integer")
    k = abs(int(s))
    a = abs(rho) ** k
    p = rho ** (2 + 2 * k)
    return a * (p + 1.0) / (1.0 - rho * rho) + a * p / (1.0 - rho * rho)


def mixingale_mc(rho: float, s: int, n_draws: int = 1_000_000, seed=0) -> dict:
    """Monte Carlo counterpart of :func:`mixingale_bound`.

    Simulates ``z_s`` from the stationary law and runs the AR(1) recursion
    ``1 + |s|`` steps forward to ``z_1``.  The bound is the expectation of
    ``|rho|^|s| (1 - rho^2) (z_s z_1)^2``; the exact squared norm of
    ``z_s E[u_{s+1} | z_1] = z_s rho^|s| (1 - rho^2) z_1`` is estimated
    alongside and never exceeds it.

    Returns
    -------
    dict
        ``bound``, ``bound_mc_sd``, ``exact_norm2`` and ``exact_mc_sd``.
    """
    if abs(rho) >= 1:
        raise DomainError("mixingale bound needs |rho| < 1")
    if s >= 0:
        raise DomainError("s must be a negative integer")
    k = abs(int(s))
    rng = as_generator(seed)
    zs = rng.standard_normal(n_draws) / math.sqrt(1.0 - rho * rho)
    z = zs.copy()
    for _ in range(k + 1):
        z = rho * z + rng.standard_normal(n_draws)
    prod2 = (zs * z) ** 2
    w_bound = abs(rho) ** k * (1.0 - rho * rho)
    w_exact = rho ** (2 * k) * (1.0 - rho * rho) ** 2
    sd = prod2.std(ddof=1) / math.sqrt(n_draws)
    return {"bound": float(w_bound * prod2.mean()), "bound_mc_sd": float(w_bound * sd),
            "exact_norm2": float(w_exact * prod2.mean()), "exact_mc_sd": float(w_exact * sd)}


def summation_identity_terms(path: FactorPath) -> tuple[float, float]:
    """Both sides of the squared-recursion identity for a local-to-unity path.

    LHS is ``tau^-1 sum nu_{s-1} eta_s``; RHS rewrites it through the end
    points, the sum of squared lagged levels and the sum of squared
    innovations.
    """
    if not isinstance(path.regime, LocalToUnity):
        raise RegimeError("summation identity applies to local-to-unity paths")
    tau = path.tau
    g = path.regime.gamma
    lag, eta = path.lagged, path.innovations
    lhs = np.dot(lag, eta) / tau
    e = math.exp(-g / tau)
    rhs = (e / 2.0 * (path.levels[-1] ** 2 - path.levels[0] ** 2) / tau
           + tau * e / 2.0 * -math.expm1(2.0 * g / tau) * np.dot(lag, lag) / tau ** 2
           - e / 2.0 * np.dot(eta, eta) / tau)
    return float(lhs), float(rhs)


def check_summation_identity(path: FactorPath) -> float:
    lhs, rhs = summation_identity_terms(path)
    return abs(lhs - rhs)
