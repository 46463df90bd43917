"""Reference cross-sectional models driven by the common shocks.

Two Gaussian linear data generating processes are provided::

    stationary:  y_it = beta * x_it + lambda(rho) * nu_t + eps_it
    unit root:   y_it = beta * x_it + lambda(rho) * nu0  + eps_it

with ``x_it ~ N(1, 1)`` and ``eps_it ~ N(0, sigma_eps^2)`` independent across
units given the shocks.  The loading ``lambda`` carries the time-series
parameter into the cross section; a non-constant loading couples the two
samples, a constant one decouples them.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ._rng import as_generator
from .errors import AlignmentError, DimensionError, DomainError
from .factor_process import FactorPath

__all__ = [
    "Loading",
    "default_loading",
    "constant_loading",
    "linear_loading",
    "Likelihood",
    "Moment",
    "ModelSpec",
    "PanelData",
    "simulate_panel",
]


# parameters used when none are given: lambda = 1/(1-rho), 1, rho
_LOADING_DEFAULTS = {"reciprocal": (), "constant": (1.0,), "linear": (0.0, 1.0)}


@dataclass(frozen=True)
class Loading:
    """Loading ``lambda(rho)`` with its analytic derivative.

    ``kind`` is one of ``"reciprocal"`` (``1 / (1 - rho)``), ``"constant"``
    (``c``) or ``"linear"`` (``a + b * rho``).
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _LOADING_DEFAULTS:
            raise DomainError(f"unknown loading kind {self.kind!r}")
        params = tuple(self.params) or _LOADING_DEFAULTS[self.kind]
        if len(params) != len(_LOADING_DEFAULTS[self.kind]):
            raise DomainError(f"{self.kind} loading takes {len(_LOADING_DEFAULTS[self.kind])} "
                              f"parameters, got {len(params)}")
        object.__setattr__(self, "params", params)

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.kind == "reciprocal":
            self._check_pole(rho)
            return 1.0 / (1.0 - rho)
        if self.kind == "constant":
            return np.full_like(rho, self.params[0])
        a, b = self.params
        return a + b * rho

    def deriv(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.kind == "reciprocal":
            self._check_pole(rho)
            return 1.0 / (1.0 - rho) ** 2
        if self.kind == "constant":
            return np.zeros_like(rho)
        return np.full_like(rho, self.params[1])

    def deriv2(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.kind == "reciprocal":
            self._check_pole(rho)
            return 2.0 / (1.0 - rho) ** 3
        return np.zeros_like(rho)

    @staticmethod
    def _check_pole(rho):
        if np.any(rho == 1.0):
            raise DomainError("reciprocal loading 1/(1-rho) has a pole at rho = 1")

    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(float(p) for p in d.get("params", ())))


def default_loading() -> Loading:
    """``lambda(rho) = 1 / (1 - rho)``; its derivative is non-zero so B != 0."""
    return Loading("reciprocal")


def constant_loading(c: float = 1.0) -> Loading:
    return Loading("constant", (float(c),))


def linear_loading(a: float = 0.0, b: float = 1.0) -> Loading:
    """``lambda(rho) = a + b rho``; ``linear_loading()`` is ``lambda(rho) = rho``."""
    return Loading("linear", (float(a), float(b)))


@dataclass(frozen=True)
class Likelihood:
    name = "likelihood"


def _check_weight(w, name):
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if w.shape[0] != w.shape[1] or not np.allclose(w, w.T, rtol=0, atol=1e-12):
        raise DomainError(f"{name} must be a symmetric square matrix")
    try:
        np.linalg.cholesky(w)
    except np.linalg.LinAlgError:
        raise DomainError(f"{name} is not positive definite") from None
    return w


@dataclass(frozen=True)
class Moment:
    """Quadratic-form criterion ``-h' W h``; ``None`` weights mean identity."""

    weight_cs: Optional[np.ndarray] = None
    weight_ts: Optional[np.ndarray] = None
    name = "moment"

    def __post_init__(self):
        if self.weight_cs is not None:
            object.__setattr__(self, "weight_cs", _check_weight(self.weight_cs, "weight_cs"))
        if self.weight_ts is not None:
            object.__setattr__(self, "weight_ts", _check_weight(self.weight_ts, "weight_ts"))

    def w_cs(self, k):
        if self.weight_cs is None:
            return np.eye(k)
        if self.weight_cs.shape != (k, k):
            raise DimensionError(f"weight_cs must be {k}x{k}")
        return self.weight_cs

    def w_ts(self):
        if self.weight_ts is None:
            return np.eye(1)
        if self.weight_ts.shape != (1, 1):
            raise DimensionError("weight_ts must be 1x1 for the AR(1) moment")
        return self.weight_ts


@dataclass(frozen=True)
class ModelSpec:
    """Reference model description.

    ``sigma_eps`` and ``sigma_eta`` scale the Gaussian criteria.  They are
    treated as known; sandwich variances do not depend on them.
    ``sigma_eps = 0`` is allowed for simulating noiseless panels but not for
    evaluating the likelihood.
    """

    kind: str = "stationary"
    loading: Loading = field(default_factory=default_loading)
    sigma_eps: float = 1.0
    sigma_eta: float = 1.0
    criterion: Union[Likelihood, Moment] = field(default_factory=Likelihood)

    def __post_init__(self):
        if self.kind not in ("stationary", "unit_root"):
            raise DomainError(f"unknown model kind {self.kind!r}")
        if self.sigma_eps < 0 or self.sigma_eta <= 0:
            raise DomainError("sigma_eps must be >= 0 and sigma_eta > 0")

    @property
    def is_moment(self) -> bool:
        return isinstance(self.criterion, Moment)

    def k_theta(self, T: int) -> int:
        return 1 + (T if self.kind == "stationary" else 1)


@dataclass
class PanelData:
    y: np.ndarray
    x: np.ndarray
    eps: Optional[np.ndarray] = None
    panel_start: int = 1

    def __post_init__(self):
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if self.y.shape != self.x.shape:
            raise DimensionError("y and x must have the same n x T shape")
        if self.n < 2 or self.T < 1:
            raise DimensionError("need n >= 2 and T >= 1")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.x))):
            raise DomainError("panel cells must be finite")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    @property
    def periods(self) -> np.ndarray:
        return np.arange(self.panel_start, self.panel_start + self.T)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "t", "y", "x"])
            for i in range(self.n):
                for j, t in enumerate(self.periods):
                    w.writerow([i, int(t), repr(float(self.y[i, j])), repr(float(self.x[i, j]))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise DimensionError(f"{path}: empty panel file")
        ii = np.array([int(r["i"]) for r in rows])
        tt = np.array([int(r["t"]) for r in rows])
        units, periods = np.unique(ii), np.unique(tt)
        if units.size * periods.size != len(rows):
            raise DimensionError(f"{path}: panel must be balanced")
        y = np.empty((units.size, periods.size))
        x = np.empty_like(y)
        ui = np.searchsorted(units, ii)
        ti = np.searchsorted(periods, tt)
        y[ui, ti] = [float(r["y"]) for r in rows]
        x[ui, ti] = [float(r["x"]) for r in rows]
        return cls(y, x, panel_start=int(periods[0]))


def simulate_panel(spec: ModelSpec, beta: float, factors: Union[FactorPath, float],
                   rho: Optional[float], n: int, T: int, seed=0,
                   panel_start: int = 1) -> PanelData:
    """Draw a panel from the reference model.

    Parameters
    ----------
    factors : FactorPath or float
        For the stationary model the path supplying ``nu_t`` for the panel
        periods ``panel_start .. panel_start + T - 1``.  For the unit-root model
        the scaled initial condition ``nu0`` (a path's ``nu0`` is used if a
        path is given).
    rho : float or None
        Time-series parameter entering the loading.  ``None`` takes the
        path's autoregressive coefficient.
    """
    if n < 2 or T < 1:
        raise DimensionError("need n >= 2 and T >= 1")
    if isinstance(factors, FactorPath):
        if rho is None:
            rho = factors.coefficient
    elif rho is None:
        raise DomainError("rho is required when factors is a scalar")
    if spec.kind == "stationary":
        if not isinstance(factors, FactorPath):
            raise AlignmentError("stationary model needs a factor path")
        last = panel_start + T - 1
        if not factors.covers(panel_start, last):
            raise AlignmentError(
                f"factor window {factors.tau0 + 1}..{factors.tau0 + factors.tau} "
                f"does not cover panel periods {panel_start}..{last}")
        nu = factors.window(panel_start, last)
    else:
        nu0 = factors.nu0 if isinstance(factors, FactorPath) else float(factors)
        nu = np.full(T, nu0)
    rng = as_generator(seed)
    x = 1.0 + rng.standard_normal((n, T))
    eps = spec.sigma_eps * rng.standard_normal((n, T))
    y = beta * x + spec.loading(rho) * nu[None, :] + eps
    return PanelData(y, x, eps, panel_start)
