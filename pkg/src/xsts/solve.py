"""Estimators: time-series AR(1), two-step, joint, and unit-root OLS.

All iterative estimators share :func:`newton`, a damped Newton solver that
halves the step until the merit function does not get worse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .criteria import (ParamVector, criterion_F, cs_equation, cs_jacobian,
                       ts_equation, ts_jacobian)
from .cross_section import ModelSpec, PanelData
from .errors import DomainError, RegimeError, SingularityError
from .factor_process import FactorPath, LocalToUnity

__all__ = [
    "EstimateResult",
    "newton",
    "estimate_timeseries",
    "profile_sigma2",
    "initial_theta",
    "estimate_twostep",
    "estimate_joint",
    "estimate_unit_root_ols",
]

TOL = 1e-10
MAX_ITER = 100


@dataclass
class EstimateResult:
    phi_hat: ParamVector
    converged: bool
    iterations: int
    final_score_norm: float
    scaling: dict
    method: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def theta_hat(self) -> np.ndarray:
        return self.phi_hat.theta

    @property
    def rho_hat(self) -> float:
        return float(self.phi_hat.rho[0])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "phi_hat": self.phi_hat.to_dict(),
            "converged": self.converged,
            "iterations": self.iterations,
            "final_score_norm": self.final_score_norm,
            "scaling": self.scaling,
            "diagnostics": self.diagnostics,
        }


def _solve(jac: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(jac)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularityError(f"singular Jacobian (condition number {cond:.3g})", cond)
    return np.linalg.solve(jac, rhs)


def newton(equation: Callable, jacobian: Callable, x0, merit: Callable,
           tol: float = TOL, max_iter: int = MAX_ITER, scale=None):
    """Damped Newton iteration for ``equation(x) = 0``.

    Parameters
    ----------
    equation, jacobian : callable
        ``x -> r`` and ``x -> dr/dx'``.
    merit : callable
        ``x -> value`` to be minimized; a step is halved (up to 40 times)
        until the merit does not increase.
    scale : array_like, optional
        Diagonal preconditioner ``D``; the step solves ``(J D) d = -r`` and
        moves ``x <- x + D d``.

    Returns
    -------
    x, converged, iterations, residual norm, history of residual norms
    """
    x = np.asarray(x0, dtype=float).copy()
    D = np.ones_like(x) if scale is None else np.asarray(scale, dtype=float)
    r = equation(x)
    norm = float(np.linalg.norm(r))
    history = [norm]
    it = 0
    while norm >= tol and it < max_iter:
        it += 1
        step = D * _solve(jacobian(x) * D[None, :], -r)
        m0 = merit(x)
        t = 1.0
        for _ in range(40):
            cand = x + t * step
            m1 = merit(cand)
            if np.isfinite(m1) and m1 <= m0 + 1e-12 * max(1.0, abs(m0)):
                break
            t *= 0.5
        else:
            break
        x = cand
        r = equation(x)
        norm = float(np.linalg.norm(r))
        history.append(norm)
    return x, norm < tol, it, norm, history


def estimate_timeseries(factors: FactorPath, spec: Optional[ModelSpec] = None):
    """AR(1) Gaussian MLE of ``rho`` and its influence function.

    Returns ``(rho_tilde, influence)`` with
    ``sqrt(tau) (rho_tilde - rho) = tau^-1/2 sum influence`` to first order.
    The influence entries are evaluated at ``rho_tilde`` so they average to
    zero exactly by the first-order condition.
    """
    if isinstance(factors.regime, LocalToUnity):
        raise RegimeError("estimate_timeseries needs a stationary path; "
                          "use estimate_unit_root_ols")
    lag, cur = factors.lagged, factors.values
    ss = float(np.dot(lag, lag))
    if ss == 0.0:
        raise SingularityError("sum of squared lagged levels is zero", math.inf)
    rho = float(np.dot(lag, cur)) / ss
    influence = (lag * (cur - rho * lag)) / (ss / factors.tau)
    return rho, influence


def profile_sigma2(factors: FactorPath, rho: float) -> float:
    """Profiled innovation variance ``mean((nu_t - rho nu_{t-1})^2)``."""
    u = factors.values - rho * factors.lagged
    return float(np.mean(u * u))


def initial_theta(panel: PanelData, rho: float, spec: ModelSpec) -> np.ndarray:
    """Least-squares mapping ``theta(rho)`` of the reference model.

    Regress ``y`` on ``x`` and period intercepts (one pooled intercept in the
    unit-root model), then divide the intercepts by ``lambda(rho)``.
    """
    n, T = panel.y.shape
    lam = float(spec.loading(rho))
    if lam == 0.0:
        raise SingularityError("loading is zero; shocks not identified", math.inf)
    if spec.kind == "stationary":
        d = np.zeros((n, T, T))
        d[:, np.arange(T), np.arange(T)] = 1.0
        X = np.concatenate([panel.x[..., None], d], axis=2).reshape(n * T, 1 + T)
    else:
        X = np.stack([panel.x.ravel(), np.ones(n * T)], axis=1)
    coef = np.linalg.lstsq(X, panel.y.ravel(), rcond=None)[0]
    coef[1:] /= lam
    return coef


def _scaling(n: int, tau: int, unit_root: bool) -> dict:
    return {"theta": n ** -0.5, "rho": (1.0 / tau) if unit_root else tau ** -0.5}


def estimate_twostep(panel: PanelData, rho_tilde: float, spec: ModelSpec,
                     init: Optional[ParamVector] = None, tol: float = TOL,
                     max_iter: int = MAX_ITER, tau: Optional[int] = None) -> EstimateResult:
    """Maximize ``F_n(theta, rho_tilde)`` over ``theta`` by Newton's method."""
    rho_arr = np.array([float(rho_tilde)])
    theta0 = initial_theta(panel, rho_tilde, spec) if init is None else init.theta
    if not np.all(np.isfinite(theta0)):
        raise DomainError("initial value must be finite")

    def pv(th):
        return ParamVector.from_theta(th, rho_arr)

    theta, ok, it, norm, hist = newton(
        lambda th: cs_equation(panel, pv(th), spec),
        lambda th: cs_jacobian(panel, pv(th), spec)[0],
        theta0,
        lambda th: -criterion_F(panel, pv(th), spec),
        tol, max_iter)
    res = EstimateResult(pv(theta), ok, it, norm,
                         _scaling(panel.n, tau or panel.n, spec.kind == "unit_root"),
                         "twostep", {"residual_history": hist})
    if not ok:
        cond = float(np.linalg.cond(cs_jacobian(panel, pv(theta), spec)[0]))
        res.diagnostics["hessian_condition"] = cond
    return res


def estimate_joint(panel: PanelData, factors: FactorPath, spec: ModelSpec,
                   init: Optional[ParamVector] = None, tol: float = TOL,
                   max_iter: int = MAX_ITER) -> EstimateResult:
    """Solve the stacked equations ``s(phi) = 0`` for ``phi = (theta, rho)``.

    The Newton step is preconditioned by ``D = diag(n^-1/2 I, tau^-1/2)``;
    the merit is the squared norm of the D-scaled score
    ``(sqrt(n) cs_equation, sqrt(tau) ts_equation)``.  Convergence is judged
    on the normalized equations.
    """
    n, tau = panel.n, factors.tau
    unit_root = spec.kind == "unit_root"
    sc = _scaling(n, tau, unit_root)
    if init is None:
        if unit_root:
            rho0 = estimate_unit_root_ols(factors)
        else:
            rho0 = estimate_timeseries(factors, spec)[0]
        init = ParamVector.from_theta(initial_theta(panel, rho0, spec), [rho0])
    k = init.k_theta
    D = np.r_[np.full(k, sc["theta"]), sc["rho"]]

    def eq(x):
        p = ParamVector.from_phi(x)
        return np.r_[cs_equation(panel, p, spec), ts_equation(factors, p, spec)]

    def jac(x):
        p = ParamVector.from_phi(x)
        a_yt, a_yr = cs_jacobian(panel, p, spec)
        a_nt, a_nr = ts_jacobian(factors, p, spec)
        return np.block([[a_yt, a_yr], [a_nt, a_nr]])

    w = np.r_[np.full(k, math.sqrt(n)), math.sqrt(tau)]

    def merit(x):
        return float(np.sum((w * eq(x)) ** 2))

    x, ok, it, norm, hist = newton(eq, jac, init.phi, merit, tol, max_iter, scale=D)
    res = EstimateResult(ParamVector.from_phi(x), ok, it, norm, sc, "joint",
                         {"residual_history": hist})
    if not ok:
        res.diagnostics["jacobian_condition"] = float(np.linalg.cond(jac(x)))
    return res


def estimate_unit_root_ols(factors: FactorPath) -> float:
    """OLS coefficient ``sum nu_{t-1} nu_t / sum nu_{t-1}^2``."""
    if not isinstance(factors.regime, LocalToUnity):
        raise RegimeError("estimate_unit_root_ols needs a local-to-unity path")
    lag, cur = factors.lagged, factors.values
    ss = float(np.dot(lag, lag))
    if ss == 0.0:
        raise SingularityError("sum of squared lagged levels is zero", math.inf)
    return float(np.dot(lag, cur)) / ss
