"""Monte Carlo samplers for the limiting laws.

Ornstein-Uhlenbeck functionals are simulated on an ``m``-step grid of
``[0, 1]`` with ``V_{k+1} = exp(gamma / m) V_k + sigma dW_k``, which is the
local-to-unity recursion itself with ``tau = m``.  Integrals use left
endpoints, ``int V dW ~ sum V_k dW_k`` (Ito convention) and
``int V^2 ~ m^-1 sum V_k^2``.

Draws are produced in fixed-size chunks; chunk ``c`` always uses the random
stream ``(seed, purpose, c)`` so results do not depend on how chunks are
scheduled.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter

from ._rng import stream
from .errors import DimensionError, DomainError, SingularityError

__all__ = [
    "LimitSample",
    "QuantileTable",
    "sample_ou_functionals",
    "ito_residual",
    "sample_df_ratio",
    "sample_ltu_ratio",
    "df_quantiles",
    "ltu_quantile_table",
    "sample_unitroot_theta_limit",
    "sample_mixed_normal",
    "write_quantile_csv",
]

MIN_GRID = 100
CHUNK = 1000
OU_COLUMNS = ("V1", "int_V2", "int_VdW", "W1")

_OU, _WY, _MN = 0, 1, 2  # stream purposes


@dataclass
class LimitSample:
    draws: np.ndarray
    kind: str
    grid_m: int = 0
    meta: dict = field(default_factory=dict)
    columns: tuple = ()

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim == 1:
            self.draws = self.draws[:, None]
        if self.draws.shape[0] < 1:
            raise DimensionError("need at least one draw")

    def column(self, name_or_index):
        if isinstance(name_or_index, str):
            name_or_index = self.columns.index(name_or_index)
        return self.draws[:, name_or_index]

    def quantiles(self, probs, col=0) -> np.ndarray:
        return np.quantile(self.draws[:, col], probs)


def _check_grid(grid_m):
    if grid_m < MIN_GRID:
        raise DomainError(f"grid_m={grid_m} too coarse; need at least {MIN_GRID}")


def _chunks(n_draws):
    if n_draws < 1:
        raise DomainError("n_draws must be positive")
    for c, start in enumerate(range(0, n_draws, CHUNK)):
        yield c, min(CHUNK, n_draws - start)


def _draw_dw(rng, size, m, antithetic=False):
    dt = 1.0 / m
    if antithetic:
        half = (size + 1) // 2
        dw = rng.standard_normal((half, m)) * math.sqrt(dt)
        dw = np.concatenate([dw, -dw], axis=0)
        return dw.reshape(2, half, m).transpose(1, 0, 2).reshape(2 * half, m)[:size]
    return rng.standard_normal((size, m)) * math.sqrt(dt)


def _ou_from_dw(dw, gamma, V0, sigma):
    size, m = dw.shape
    dt = 1.0 / m
    a = math.exp(gamma * dt)
    V0 = np.broadcast_to(np.asarray(V0, dtype=float), (size,))
    zi = (a * V0)[:, None]
    path = lfilter([1.0], [1.0, -a], sigma * dw, axis=1, zi=zi)[0]
    left = np.concatenate([V0[:, None], path[:, :-1]], axis=1)
    v1 = path[:, -1]
    int_v2 = np.sum(left * left, axis=1) * dt
    int_vdw = np.sum(left * dw, axis=1)
    w1 = dw.sum(axis=1)
    return np.column_stack([v1, int_v2, int_vdw, w1])


def _ou_chunk(rng, size, gamma, V0, sigma, m, antithetic=False):
    return _ou_from_dw(_draw_dw(rng, size, m, antithetic), gamma, V0, sigma)


def sample_ou_functionals(gamma: float, V0: float, sigma: float, grid_m: int = 5000,
                          n_draws: int = 10_000, seed: int = 0) -> LimitSample:
    """Draws of ``(V(1), int V^2, int V dW, W(1))`` for the OU limit process
    ``V(r) = exp(gamma r) V(0) + int_0^r sigma exp(gamma (r - s)) dW(s)``.

    ``int V dW`` is against the standard Wiener process, so
    ``sigma * int V dW`` is the limit of ``tau^-1 sum nu_{t-1} eta_t``.
    """
    _check_grid(grid_m)
    out = [_ou_chunk(stream(seed, _OU, c), size, gamma, V0, sigma, grid_m)
           for c, size in _chunks(n_draws)]
    return LimitSample(np.concatenate(out), "OUFunctionals", grid_m,
                       {"gamma": gamma, "V0": V0, "sigma": sigma}, OU_COLUMNS)


def ito_residual(sample: LimitSample) -> np.ndarray:
    """Per-draw residual of ``(V(1)^2 - V(0)^2)/2 - gamma int V^2 - sigma^2/2 = sigma int V dW``."""
    g, v0, s = (sample.meta[k] for k in ("gamma", "V0", "sigma"))
    v1, iv2, ivdw, _ = sample.draws.T
    return 0.5 * (v1 ** 2 - v0 ** 2) - g * iv2 - 0.5 * s * s - s * ivdw


def _ratio(d):
    return d[:, 2] / d[:, 1]


def sample_df_ratio(grid_m: int = 5000, n_draws: int = 100_000, seed: int = 0,
                    antithetic: bool = False) -> LimitSample:
    """Draws of ``(W(1)^2 - 1) / (2 int W^2)``, the unit-root limit of ``tau (rho_hat - 1)``.

    With ``antithetic=True`` consecutive draws use ``W`` and ``-W``.
    """
    _check_grid(grid_m)
    out = []
    for c, size in _chunks(n_draws):
        d = _ou_chunk(stream(seed, _OU, c), size, 0.0, 0.0, 1.0, grid_m, antithetic)
        out.append((d[:, 3] ** 2 - 1.0) / (2.0 * d[:, 1]))
    return LimitSample(np.concatenate(out), "DFRatio", grid_m, {"antithetic": antithetic},
                       ("ratio",))


def sample_ltu_ratio(gamma: float, grid_m: int = 1000, n_draws: int = 10_000,
                     seed: int = 0, V0: float = 0.0) -> LimitSample:
    """Draws of ``int V dW / int V^2``, the local-to-unity limit of ``tau (rho_hat - rho)``.

    The law does not depend on ``sigma``.  The same ``seed`` gives the same
    Wiener paths for every ``gamma`` (common random numbers across a grid).
    """
    _check_grid(grid_m)
    out = [_ratio(_ou_chunk(stream(seed, _OU, c), size, gamma, V0, 1.0, grid_m))
           for c, size in _chunks(n_draws)]
    return LimitSample(np.concatenate(out), "LTURatio", grid_m, {"gamma": gamma, "V0": V0},
                       ("ratio",))


@lru_cache(maxsize=32)
def _df_quantiles_cached(probs, grid_m, n_draws, seed):
    return sample_df_ratio(grid_m, n_draws, seed).quantiles(np.array(probs))


def df_quantiles(probs, grid_m: int = 5000, n_draws: int = 100_000, seed: int = 0) -> np.ndarray:
    """Cached quantiles of the Dickey-Fuller ratio."""
    return _df_quantiles_cached(tuple(float(p) for p in probs), grid_m, n_draws, seed).copy()


@dataclass
class QuantileTable:
    """Quantiles of the local-to-unity ratio law on a grid of ``gamma``."""

    gamma_grid: np.ndarray
    probs: np.ndarray
    quantiles: np.ndarray  # len(gamma_grid) x len(probs)
    meta: dict = field(default_factory=dict)

    def bounds(self, alpha: float):
        """Lower and upper ``alpha/2`` quantiles for every grid point (interpolated in p)."""
        lo = np.array([np.interp(alpha / 2, self.probs, q) for q in self.quantiles])
        hi = np.array([np.interp(1 - alpha / 2, self.probs, q) for q in self.quantiles])
        return lo, hi

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gamma", "probability", "quantile"])
            for g, row in zip(self.gamma_grid, self.quantiles):
                for p, q in zip(self.probs, row):
                    w.writerow([repr(float(g)), repr(float(p)), repr(float(q))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = [(float(r["gamma"]), float(r["probability"]), float(r["quantile"]))
                    for r in csv.DictReader(fh)]
        gam = np.unique([r[0] for r in rows])
        probs = np.unique([r[1] for r in rows])
        q = np.empty((gam.size, probs.size))
        for g, p, v in rows:
            q[np.searchsorted(gam, g), np.searchsorted(probs, p)] = v
        return cls(gam, probs, q)


def ltu_quantile_table(gamma_grid, probs=None, grid_m: int = 1000, n_draws: int = 10_000,
                       seed: int = 0) -> QuantileTable:
    """Quantile belt of the local-to-unity ratio law with ``V(0) = 0``."""
    if probs is None:
        probs = np.linspace(0.001, 0.999, 999)
    probs = np.asarray(probs, dtype=float)
    gamma_grid = np.asarray(gamma_grid, dtype=float)
    _check_grid(grid_m)
    # one set of Wiener increments per chunk, shared by every gamma; this is
    # the same draw sample_ltu_ratio(g, grid_m, n_draws, seed) makes
    ratios = np.empty((gamma_grid.size, n_draws))
    for c, size in _chunks(n_draws):
        dw = _draw_dw(stream(seed, _OU, c), size, grid_m)
        for j, g in enumerate(gamma_grid):
            ratios[j, c * CHUNK:c * CHUNK + size] = _ratio(_ou_from_dw(dw, g, 0.0, 1.0))
    q = np.quantile(ratios, probs, axis=1).T
    return QuantileTable(gamma_grid, probs, q,
                         {"grid_m": grid_m, "n_draws": n_draws, "seed": seed})


def sample_unitroot_theta_limit(A_y_theta, A_y_rho, omega_y, kappa: float, gamma: float,
                                V0: float, sigma: float, grid_m: int = 5000,
                                n_draws: int = 10_000, seed: int = 0) -> LimitSample:
    """Draws of the unit-root limit of ``sqrt(n) (theta_hat - theta0)``::

        -A^-1 Omega_y^1/2 W_y(1) - sqrt(kappa) A^-1 A_y_rho (int V^2)^-1 (sigma int V dW)

    ``kappa = n / tau^2``.  ``W_y`` and the OU path are independent.
    """
    from .avar import psd_sqrt

    A = np.atleast_2d(np.asarray(A_y_theta, dtype=float))
    k = A.shape[0]
    B = np.asarray(A_y_rho, dtype=float).reshape(k)
    if np.linalg.cond(A) > 1e14:
        raise SingularityError("A_y_theta is singular", float(np.linalg.cond(A)))
    Ai = np.linalg.inv(A)
    root = psd_sqrt(np.atleast_2d(omega_y))
    second = math.sqrt(kappa) * (Ai @ B)
    out = []
    for c, size in _chunks(n_draws):
        wy = stream(seed, _WY, c).standard_normal((size, k))
        first = -wy @ (Ai @ root).T
        if np.any(second != 0):
            _check_grid(grid_m)
            d = _ou_chunk(stream(seed, _OU, c), size, gamma, V0, sigma, grid_m)
            ratio = sigma * d[:, 2] / d[:, 1]
            first = first - ratio[:, None] * second[None, :]
        out.append(first)
    return LimitSample(np.concatenate(out), "UnitRootTheta", grid_m,
                       {"gamma": gamma, "V0": V0, "sigma": sigma, "kappa": kappa})


def sample_mixed_normal(A, omega, n_draws: int = 10_000, seed: int = 0,
                        state_probs=None) -> LimitSample:
    """Draws of ``-A^-1 Omega^1/2 W``.

    ``A`` and ``omega`` are either single ``k x k`` matrices or stacks of
    shape ``(S, k, k)`` describing ``S`` conditioning states; each draw then
    picks a state with probabilities ``state_probs`` (uniform by default), so
    the sample is a variance mixture of normals.
    """
    from .avar import psd_sqrt

    A = np.asarray(A, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if A.ndim < 2:
        A = A.reshape(1, 1)
    if omega.ndim < 2:
        omega = omega.reshape(1, 1)
    if A.ndim == 2:
        A = A[None]
    if omega.ndim == 2:
        omega = omega[None]
    S = max(A.shape[0], omega.shape[0])
    A = np.broadcast_to(A, (S,) + A.shape[1:])
    omega = np.broadcast_to(omega, (S,) + omega.shape[1:])
    k = A.shape[1]
    maps = []
    for s in range(S):
        if np.linalg.cond(A[s]) > 1e14:
            raise SingularityError(f"A is singular in state {s}", float(np.linalg.cond(A[s])))
        maps.append(-np.linalg.inv(A[s]) @ psd_sqrt(omega[s]))
    maps = np.array(maps)
    p = np.full(S, 1.0 / S) if state_probs is None else np.asarray(state_probs, dtype=float)
    out = []
    for c, size in _chunks(n_draws):
        rng = stream(seed, _MN, c)
        w = rng.standard_normal((size, k))
        states = rng.choice(S, size=size, p=p) if S > 1 else np.zeros(size, dtype=int)
        out.append(np.einsum("nij,nj->ni", maps[states], w))
    return LimitSample(np.concatenate(out), "MixedNormal", 0, {"states": S})


def write_quantile_csv(path, probs, quantiles) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["probability", "quantile"])
        for p, q in zip(probs, quantiles):
            w.writerow([repr(float(p)), repr(float(q))])
