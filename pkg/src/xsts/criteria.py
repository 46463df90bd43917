"""Cross-section and time-series criteria, their scores and curvature.

Notation follows the estimating equations of the combined problem.  With
``theta = (beta, nu)`` and ``phi = (theta, rho)``:

* ``F_n(theta, rho) = n^-1 sum_t sum_i f(y_it | theta, rho)`` for the Gaussian
  likelihood, or ``-h_n' W h_n`` with ``h_n = n^-1 sum_t sum_i z_it e_it``
  for the moment criterion;
* ``G_tau(beta, rho) = tau^-1 sum_t g(nu_t | nu_{t-1}, rho)`` (AR(1) Gaussian
  log density) or ``-k' W k`` with ``k = tau^-1 sum_t nu_{t-1} u_t``.

The *normalized* estimating equations are ``dF/dtheta`` and ``dG/drho`` for
likelihoods and half of those for quadratic forms, so that in both cases the
score ``s^y = sqrt(n) * cs_equation`` and ``s^nu = sqrt(tau) * ts_equation``.
Their Jacobians are the Hessian blocks ``A``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cross_section import ModelSpec, PanelData
from .errors import DimensionError, DomainError, RegimeError
from .factor_process import FactorPath, Stationary

__all__ = [
    "ParamVector",
    "ScoreBundle",
    "criterion_F",
    "criterion_G",
    "cs_equation",
    "ts_equation",
    "cs_jacobian",
    "ts_jacobian",
    "gradient_F",
    "gradient_G",
    "cs_scores",
    "scores",
    "population_F",
    "population_G",
    "identification_diagnostic",
]

LOG2PI = math.log(2.0 * math.pi)


@dataclass
class ParamVector:
    """``phi = (beta, nu, rho)``.  ``nu`` has length T (stationary) or 1 (``nu0``)."""

    beta: np.ndarray
    nu: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        self.nu = np.atleast_1d(np.asarray(self.nu, dtype=float)).copy()
        self.rho = np.atleast_1d(np.asarray(self.rho, dtype=float)).copy()
        if self.beta.size != 1 or self.rho.size != 1:
            raise DimensionError("reference models have scalar beta and rho")

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.beta, self.nu])

    @property
    def phi(self) -> np.ndarray:
        return np.concatenate([self.beta, self.nu, self.rho])

    @property
    def k_theta(self) -> int:
        return 1 + self.nu.size

    @classmethod
    def from_theta(cls, theta, rho):
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:1], theta[1:], rho)

    @classmethod
    def from_phi(cls, phi):
        phi = np.asarray(phi, dtype=float)
        return cls(phi[:1], phi[1:-1], phi[-1:])

    def replace(self, beta=None, nu=None, rho=None):
        return ParamVector(self.beta if beta is None else beta,
                           self.nu if nu is None else nu,
                           self.rho if rho is None else rho)

    def to_dict(self):
        return {"beta": self.beta.tolist(), "nu": self.nu.tolist(), "rho": self.rho.tolist()}


@dataclass
class ScoreBundle:
    """Per-observation score contributions.

    ``cs_scores`` has one row per ``(i, t)`` cell (row ``i * T + t``) and
    ``k_theta`` columns; ``ts_scores`` has one row per transition.  For moment
    criteria the rows are ``-J' W f_it`` and ``-K' W g_t``, the raw moments are
    kept in ``cs_moments`` / ``ts_moments`` and the Jacobians ``J = dh/dtheta'``
    and ``K = dk/drho'`` in ``cs_jacobian`` / ``ts_jacobian``.
    """

    cs_scores: np.ndarray
    ts_scores: np.ndarray
    n: int
    tau: int
    cs_moments: Optional[np.ndarray] = None
    ts_moments: Optional[np.ndarray] = None
    cs_jacobian: Optional[np.ndarray] = None
    ts_jacobian: Optional[np.ndarray] = None
    weight_cs: Optional[np.ndarray] = None
    weight_ts: Optional[np.ndarray] = None


def _check_dims(panel: PanelData, phi: ParamVector, spec: ModelSpec):
    want = panel.T if spec.kind == "stationary" else 1
    if phi.nu.size != want:
        raise DimensionError(
            f"{spec.kind} model with T={panel.T} needs {want} shock parameter(s), "
            f"got {phi.nu.size}")


def _sigma2(spec: ModelSpec) -> float:
    if spec.sigma_eps <= 0:
        raise DomainError("likelihood needs sigma_eps > 0")
    return spec.sigma_eps ** 2


class _Cells:
    """Residuals and derivative pieces of the mean ``beta x + lambda(rho) nu_t``."""

    def __init__(self, panel: PanelData, phi: ParamVector, spec: ModelSpec):
        _check_dims(panel, phi, spec)
        n, T = panel.y.shape
        rho = float(phi.rho[0])
        lam = float(spec.loading(rho))
        dlam = float(spec.loading.deriv(rho))
        nu_t = phi.nu if spec.kind == "stationary" else np.full(T, phi.nu[0])
        k = phi.k_theta
        self.e = panel.y - phi.beta[0] * panel.x - lam * nu_t[None, :]
        z = np.zeros((n, T, k))
        z[:, :, 0] = panel.x
        dz = np.zeros((n, T, k))
        if spec.kind == "stationary":
            for t in range(T):
                z[:, t, 1 + t] = lam
                dz[:, t, 1 + t] = dlam
        else:
            z[:, :, 1] = lam
            dz[:, :, 1] = dlam
        self.z = z                      # d mean / d theta
        self.dz = dz                    # d z / d rho
        self.dmu = np.broadcast_to(dlam * nu_t[None, :], (n, T))  # d mean / d rho
        self.n, self.T, self.k = n, T, k


def _moments_cs(c: _Cells):
    """h_n, J = dh/dtheta', h_rho = dh/drho and dJ/drho."""
    m = c.z * c.e[..., None]
    h = m.sum(axis=1).mean(axis=0)
    J = -np.einsum("itk,itl->kl", c.z, c.z) / c.n
    h_rho = (c.dz * c.e[..., None] - c.z * c.dmu[..., None]).sum(axis=1).mean(axis=0)
    dJ = -(np.einsum("itk,itl->kl", c.dz, c.z) + np.einsum("itk,itl->kl", c.z, c.dz)) / c.n
    return m, h, J, h_rho, dJ


def criterion_F(panel: PanelData, phi: ParamVector, spec: ModelSpec) -> float:
    """Cross-section criterion ``F_n`` at ``phi``."""
    c = _Cells(panel, phi, spec)
    if spec.is_moment:
        _, h, *_ = _moments_cs(c)
        W = spec.criterion.w_cs(c.k)
        return float(-h @ W @ h)
    s2 = _sigma2(spec)
    ll = -0.5 * (LOG2PI + math.log(s2)) - 0.5 * c.e ** 2 / s2
    return float(ll.sum(axis=1).mean())


def gradient_F(panel: PanelData, phi: ParamVector, spec: ModelSpec):
    """``(dF/dtheta, dF/drho)`` of the cross-section criterion."""
    c = _Cells(panel, phi, spec)
    if spec.is_moment:
        _, h, J, h_rho, _ = _moments_cs(c)
        W = spec.criterion.w_cs(c.k)
        return -2.0 * J.T @ W @ h, np.array([-2.0 * h_rho @ W @ h])
    s2 = _sigma2(spec)
    g_theta = np.einsum("itk,it->k", c.z, c.e) / (c.n * s2)
    g_rho = np.sum(c.dmu * c.e) / (c.n * s2)
    return g_theta, np.array([g_rho])


def cs_equation(panel: PanelData, phi: ParamVector, spec: ModelSpec) -> np.ndarray:
    """Normalized cross-section estimating equation ``n^-1/2 s^y``."""
    g, _ = gradient_F(panel, phi, spec)
    return 0.5 * g if spec.is_moment else g


def cs_jacobian(panel: PanelData, phi: ParamVector, spec: ModelSpec):
    """``(A_y_theta, A_y_rho)``: derivatives of :func:`cs_equation`."""
    c = _Cells(panel, phi, spec)
    if spec.is_moment:
        _, h, J, h_rho, dJ = _moments_cs(c)
        W = spec.criterion.w_cs(c.k)
        a_tt = -J.T @ W @ J
        a_tr = -(J.T @ W @ h_rho + dJ.T @ W @ h)
        return a_tt, a_tr[:, None]
    s2 = _sigma2(spec)
    a_tt = -np.einsum("itk,itl->kl", c.z, c.z) / (c.n * s2)
    a_tr = (np.einsum("itk,it->k", c.dz, c.e)
            - np.einsum("itk,it->k", c.z, c.dmu)) / (c.n * s2)
    return a_tt, a_tr[:, None]


def _ts_data(factors: FactorPath):
    return factors.lagged, factors.values


def criterion_G(factors: FactorPath, phi: ParamVector, spec: ModelSpec) -> float:
    """Time-series criterion ``G_tau``; does not involve ``beta``."""
    lag, cur = _ts_data(factors)
    rho = float(phi.rho[0])
    u = cur - rho * lag
    if spec.is_moment:
        k = np.mean(lag * u)
        W = spec.criterion.w_ts()
        return float(-k * W[0, 0] * k)
    s2 = spec.sigma_eta ** 2
    return float(np.mean(-0.5 * (LOG2PI + math.log(s2)) - 0.5 * u * u / s2))


def gradient_G(factors: FactorPath, phi: ParamVector, spec: ModelSpec):
    """``(dG/dtheta, dG/drho)``; the first is identically zero."""
    lag, cur = _ts_data(factors)
    rho = float(phi.rho[0])
    u = cur - rho * lag
    zero = np.zeros(phi.k_theta)
    if spec.is_moment:
        W = spec.criterion.w_ts()[0, 0]
        k = np.mean(lag * u)
        K = -np.mean(lag * lag)
        return zero, np.array([-2.0 * K * W * k])
    return zero, np.array([np.mean(lag * u) / spec.sigma_eta ** 2])


def ts_equation(factors: FactorPath, phi: ParamVector, spec: ModelSpec) -> np.ndarray:
    """Normalized time-series estimating equation ``tau^-1/2 s^nu``."""
    _, g = gradient_G(factors, phi, spec)
    return 0.5 * g if spec.is_moment else g


def ts_jacobian(factors: FactorPath, phi: ParamVector, spec: ModelSpec):
    """``(A_nu_theta, A_nu_rho)``: derivatives of :func:`ts_equation`."""
    lag, _ = _ts_data(factors)
    a_nt = np.zeros((1, phi.k_theta))
    ss = np.mean(lag * lag)
    if spec.is_moment:
        W = spec.criterion.w_ts()[0, 0]
        return a_nt, np.array([[-ss * W * ss]])
    return a_nt, np.array([[-ss / spec.sigma_eta ** 2]])


def cs_scores(panel: PanelData, phi: ParamVector, spec: ModelSpec):
    """Cross-section part of :func:`scores`.

    Returns ``(rows, moments, J, W)``; the last three are ``None`` for the
    likelihood criterion.
    """
    c = _Cells(panel, phi, spec)
    if spec.is_moment:
        m, _, J, _, _ = _moments_cs(c)
        W = spec.criterion.w_cs(c.k)
        cs_m = m.reshape(c.n * c.T, c.k)
        return -cs_m @ W @ J, cs_m, J, W
    s2 = _sigma2(spec)
    return (c.z * c.e[..., None] / s2).reshape(c.n * c.T, c.k), None, None, None


def scores(panel: PanelData, factors: FactorPath, phi: ParamVector,
           spec: ModelSpec) -> ScoreBundle:
    """Per-observation scores ``f_theta,it`` and ``g_rho,t`` at ``phi``."""
    rows, cs_m, J, W = cs_scores(panel, phi, spec)
    lag, cur = _ts_data(factors)
    u = cur - float(phi.rho[0]) * lag
    if spec.is_moment:
        g = (lag * u)[:, None]
        K = np.array([[-np.mean(lag * lag)]])
        Wt = spec.criterion.w_ts()
        return ScoreBundle(cs_scores=rows, ts_scores=-g @ Wt @ K,
                           n=panel.n, tau=factors.tau, cs_moments=cs_m, ts_moments=g,
                           cs_jacobian=J, ts_jacobian=K, weight_cs=W, weight_ts=Wt)
    g = (lag * u / spec.sigma_eta ** 2)[:, None]
    return ScoreBundle(cs_scores=rows, ts_scores=g, n=panel.n, tau=factors.tau)


# ---------------------------------------------------------------------------
# population criteria of the reference model

def _true_intercepts(spec: ModelSpec, phi0: ParamVector) -> np.ndarray:
    return float(spec.loading(phi0.rho[0])) * phi0.nu


def population_F(spec: ModelSpec, phi: ParamVector, phi0: ParamVector) -> float:
    """Probability limit of ``F_n`` when data come from ``phi0``.

    Uses ``E[x] = 1``, ``E[x^2] = 2`` of the reference regressor.
    """
    if phi.nu.size != phi0.nu.size:
        raise DimensionError("phi and phi0 must have the same shape")
    db = float(phi0.beta[0] - phi.beta[0])
    dc = _true_intercepts(spec, phi0) - float(spec.loading(phi.rho[0])) * phi.nu
    if spec.kind == "unit_root":
        dc = np.atleast_1d(dc)
    if spec.is_moment:
        lam = float(spec.loading(phi.rho[0]))
        if spec.kind == "stationary":
            h = np.concatenate([[np.sum(2 * db + dc)], lam * (db + dc)])
        else:
            h = np.array([2 * db + dc[0], lam * (db + dc[0])])
        W = spec.criterion.w_cs(h.size)
        return float(-h @ W @ h)
    s2 = _sigma2(spec)
    mse = spec.sigma_eps ** 2 + 2 * db ** 2 + 2 * db * dc + dc ** 2
    per = -0.5 * (LOG2PI + math.log(s2)) - 0.5 * mse / s2
    return float(np.sum(per))


def population_G(spec: ModelSpec, rho: float, rho0: float, beta: float = 0.0) -> float:
    """Probability limit of ``G_tau`` for a stationary AR(1) with coefficient ``rho0``.

    ``beta`` is accepted to make explicit that the limit does not depend on it.
    """
    if abs(rho0) >= 1:
        raise RegimeError("population G needs a stationary factor")
    s2 = spec.sigma_eta ** 2
    var_nu = s2 / (1.0 - rho0 ** 2)
    if spec.is_moment:
        k = (rho0 - rho) * var_nu
        return float(-k * spec.criterion.w_ts()[0, 0] * k)
    return float(-0.5 * (LOG2PI + math.log(s2)) - 0.5 * (s2 + (rho0 - rho) ** 2 * var_nu) / s2)


def identification_diagnostic(spec: ModelSpec, phi0: ParamVector, rho_grid,
                              beta_grid=None, tol: float = 1e-8) -> dict:
    """Numerical check of the identification conditions of the combined model.

    For every ``rho`` on the grid the cross-section criterion is maximized
    over ``(beta, nu)`` (closed form in the reference model: ``beta`` stays at
    its true value and ``nu_t(rho) = lambda(rho0) nu_t / lambda(rho)``).  The
    report contains

    * ``profile_gap``: max over the grid of ``|max F(., rho) - max F(., rho0)|``;
      the first condition requires it to vanish;
    * ``min_distance``: min over ``rho != rho0`` of ``|| theta(rho) - theta0 ||``;
      the second condition requires it to be positive;
    * ``ts_flatness``: spread over ``beta_grid`` of ``max_rho G(beta, rho)``.

    Grid points where the inner maximization has no solution (zero loading)
    are flagged in ``not_converged`` and excluded.
    """
    rho_grid = np.asarray(rho_grid, dtype=float)
    rho0 = float(phi0.rho[0])
    c0 = _true_intercepts(spec, phi0)
    f0 = population_F(spec, phi0, phi0)
    prof, thetas, bad = [], [], []
    for r in rho_grid:
        try:
            lam = float(spec.loading(r))
        except DomainError:
            lam = 0.0
        if lam == 0.0:
            bad.append(float(r))
            prof.append(float("nan"))
            thetas.append([float("nan")] * phi0.k_theta)
            continue
        th = ParamVector(phi0.beta, c0 / lam, [r])
        prof.append(population_F(spec, th, phi0))
        thetas.append(th.theta.tolist())
    prof = np.array(prof)
    thetas = np.array(thetas)
    ok = np.isfinite(prof)
    gap = float(np.max(np.abs(prof[ok] - f0))) if ok.any() else float("nan")
    away = ok & (np.abs(rho_grid - rho0) > 1e-12)
    dist = np.linalg.norm(thetas[away] - phi0.theta[None, :], axis=1)
    min_dist = float(dist.min()) if dist.size else float("nan")

    report = {
        "rho0": rho0,
        "rho_grid": rho_grid.tolist(),
        "profile_max_F": prof.tolist(),
        "profile_gap": gap,
        "no_cs_identification_1": bool(gap < tol),
        "theta_of_rho": thetas.tolist(),
        "min_distance": min_dist,
        "no_cs_identification_2": bool(min_dist > tol),
        "not_converged": bad,
    }
    if spec.kind == "stationary" and abs(rho0) < 1:
        if beta_grid is None:
            beta_grid = float(phi0.beta[0]) + np.linspace(-1.0, 1.0, 5)
        # G is concave quadratic in rho with maximizer rho0 for every beta
        ts_max = [population_G(spec, rho0, rho0, b) for b in beta_grid]
        flat = float(np.ptp(ts_max))
        report.update({
            "beta_grid": list(map(float, beta_grid)),
            "profile_max_G": ts_max,
            "ts_flatness": flat,
            "no_ts_identification": bool(flat < tol),
            "rho_of_beta": [rho0] * len(ts_max),
        })
    report["identified"] = bool(report["no_cs_identification_1"]
                                and report["no_cs_identification_2"]
                                and report.get("no_ts_identification", True))
    return report
