"""Asymptotic variance of the combined estimator.

Hessian blocks are the Jacobians of the normalized estimating equations::

    A = [[A_y_theta,               sqrt(kappa) A_y_rho],
         [A_nu_theta / sqrt(kappa), A_nu_rho          ]]

with ``kappa = n / tau`` (``n / tau^2`` for a local-to-unity factor).  The
limit of ``sqrt(n) (theta_hat - theta0)`` is mixed normal with variance
``A^{y,theta} Omega_y A^{y,theta}' + kappa A^{y,rho} Omega_nu(1) A^{y,rho}'``.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .criteria import ParamVector, ScoreBundle, cs_equation, cs_jacobian, ts_equation, ts_jacobian
from .cross_section import ModelSpec, PanelData
from .errors import DimensionError, NotPSDError, SingularityError
from .factor_process import FactorPath

__all__ = [
    "ABlocks",
    "OmegaEstimates",
    "InverseBlocks",
    "hessian_blocks",
    "fd_hessian_blocks",
    "omega_estimates",
    "partitioned_inverse",
    "asymptotic_variance_theta",
    "joint_covariance",
    "twostep_se",
    "sandwich",
    "pivotal_stat",
    "psd_sqrt",
    "psd_inv_sqrt",
    "symmetrize",
    "reference_blocks",
]

EIG_FLOOR = 1e-12
PSD_TOL = 1e-10
COND_MAX = 1e14


def symmetrize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def _check_psd(m: np.ndarray, name: str) -> np.ndarray:
    m = symmetrize(np.atleast_2d(m))
    if m.size == 0:
        return m
    w = np.linalg.eigvalsh(m)
    tr = max(abs(np.trace(m)), np.finfo(float).tiny)
    if w.min() < -PSD_TOL * tr:
        raise NotPSDError(f"{name} not positive semidefinite (min eigenvalue {w.min():.3g})")
    return m


def _inv(m: np.ndarray, name: str) -> np.ndarray:
    m = np.atleast_2d(m)
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise SingularityError(f"{name} is singular (condition number {cond:.3g})", cond)
    return np.linalg.inv(m)


@dataclass
class ABlocks:
    A_y_theta: np.ndarray
    A_y_rho: np.ndarray
    A_nu_theta: np.ndarray
    A_nu_rho: np.ndarray
    kappa: float

    def __post_init__(self):
        self.A_y_theta = np.atleast_2d(np.asarray(self.A_y_theta, dtype=float))
        k = self.A_y_theta.shape[0]
        self.A_y_rho = np.asarray(self.A_y_rho, dtype=float).reshape(k, -1)
        r = self.A_y_rho.shape[1]
        self.A_nu_theta = np.asarray(self.A_nu_theta, dtype=float).reshape(r, k)
        self.A_nu_rho = np.asarray(self.A_nu_rho, dtype=float).reshape(r, r)
        if self.A_y_theta.shape != (k, k):
            raise DimensionError("A_y_theta must be square")
        if not self.kappa > 0:
            raise DimensionError("kappa must be positive")

    @property
    def k_theta(self) -> int:
        return self.A_y_theta.shape[0]

    @property
    def k_rho(self) -> int:
        return self.A_nu_rho.shape[0]

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.A_y_theta))

    def assemble(self) -> np.ndarray:
        """Full ``A`` with the ``sqrt(kappa)`` scalings."""
        s = np.sqrt(self.kappa)
        return np.block([[self.A_y_theta, s * self.A_y_rho],
                         [self.A_nu_theta / s, self.A_nu_rho]])

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in asdict(self).items()} | {"condition_number": self.condition_number}


@dataclass
class OmegaEstimates:
    omega_y: np.ndarray
    omega_nu1: np.ndarray
    omega_f: Optional[np.ndarray] = None
    omega_g1: Optional[np.ndarray] = None
    omega_theta: Optional[np.ndarray] = None

    def to_dict(self):
        return {k: (None if v is None else np.asarray(v).tolist()) for k, v in asdict(self).items()}


@dataclass
class InverseBlocks:
    """Blocks ``A^{y,theta}, A^{y,rho}, A^{nu,theta}, A^{nu,rho}`` of the inverse.

    The inverse of the kappa-scaled ``A`` is
    ``[[A^{y,theta}, sqrt(kappa) A^{y,rho}], [A^{nu,theta} / sqrt(kappa), A^{nu,rho}]]``.
    """

    yt: np.ndarray
    yr: np.ndarray
    nt: np.ndarray
    nr: np.ndarray

    def assemble(self, kappa: float) -> np.ndarray:
        s = np.sqrt(kappa)
        return np.block([[self.yt, s * self.yr], [self.nt / s, self.nr]])


def _kappa(n: int, tau: int, unit_root: bool) -> float:
    return n / tau ** 2 if unit_root else n / tau


def hessian_blocks(panel: PanelData, factors: FactorPath, phi_hat: ParamVector,
                   spec: ModelSpec, kappa: Optional[float] = None) -> ABlocks:
    """Analytic Hessian blocks at ``phi_hat``; ``kappa`` defaults to the realized ratio."""
    a_yt, a_yr = cs_jacobian(panel, phi_hat, spec)
    a_nt, a_nr = ts_jacobian(factors, phi_hat, spec)
    if kappa is None:
        kappa = _kappa(panel.n, factors.tau, spec.kind == "unit_root")
    blocks = ABlocks(a_yt, a_yr, a_nt, a_nr, kappa)
    _inv(blocks.A_y_theta, "A_y_theta")
    return blocks


def fd_hessian_blocks(panel, factors, phi: ParamVector, spec, step: float = 1e-5) -> ABlocks:
    """Central finite differences of the estimating equations (cross-check only)."""
    x0 = phi.phi
    k = phi.k_theta
    cols = []
    for j in range(x0.size):
        h = step * max(1.0, abs(x0[j]))
        up, dn = x0.copy(), x0.copy()
        up[j] += h
        dn[j] -= h
        pu, pd = ParamVector.from_phi(up), ParamVector.from_phi(dn)
        eu = np.r_[cs_equation(panel, pu, spec), ts_equation(factors, pu, spec)]
        ed = np.r_[cs_equation(panel, pd, spec), ts_equation(factors, pd, spec)]
        cols.append((eu - ed) / (2 * h))
    J = np.column_stack(cols)
    kappa = _kappa(panel.n, factors.tau, spec.kind == "unit_root")
    return ABlocks(J[:k, :k], J[:k, k:], J[k:, :k], J[k:, k:], kappa)


def omega_estimates(bundle: ScoreBundle, spec: ModelSpec,
                    blocks: Optional[ABlocks] = None) -> OmegaEstimates:
    """Outer-product variance estimates from per-observation scores.

    Likelihood: ``Omega_y = n^-1 sum_t sum_i f f'`` and
    ``Omega_nu(1) = tau^-1 sum_t g g'``.  Moment criteria use
    ``Omega_y = J' W Omega_f W J`` and ``Omega_nu(1) = K' W Omega_g(1) W K``.
    ``omega_theta`` is left empty; see :func:`asymptotic_variance_theta`.
    """
    n, tau = bundle.n, bundle.tau
    if bundle.cs_moments is not None:
        om_f = _check_psd(bundle.cs_moments.T @ bundle.cs_moments / n, "Omega_f")
        om_g = _check_psd(bundle.ts_moments.T @ bundle.ts_moments / tau, "Omega_g(1)")
        J, W = bundle.cs_jacobian, bundle.weight_cs
        K, Wt = bundle.ts_jacobian, bundle.weight_ts
        om_y = symmetrize(J.T @ W @ om_f @ W.T @ J)
        om_nu = symmetrize(K.T @ Wt @ om_g @ Wt.T @ K)
        return OmegaEstimates(_check_psd(om_y, "Omega_y"), _check_psd(om_nu, "Omega_nu(1)"),
                              om_f, om_g)
    om_y = bundle.cs_scores.T @ bundle.cs_scores / n
    om_nu = bundle.ts_scores.T @ bundle.ts_scores / tau
    return OmegaEstimates(_check_psd(om_y, "Omega_y"), _check_psd(om_nu, "Omega_nu(1)"))


def partitioned_inverse(blocks: ABlocks) -> InverseBlocks:
    """Inverse blocks via the Schur complement of ``A_y_theta``."""
    P_inv = _inv(blocks.A_y_theta, "A_y_theta")
    Q, R, S = blocks.A_y_rho, blocks.A_nu_theta, blocks.A_nu_rho
    schur = S - R @ P_inv @ Q
    S_inv = _inv(schur, "Schur complement")
    yt = P_inv + P_inv @ Q @ S_inv @ R @ P_inv
    yr = -P_inv @ Q @ S_inv
    nt = -S_inv @ R @ P_inv
    return InverseBlocks(yt, yr, nt, S_inv)


def asymptotic_variance_theta(inv: InverseBlocks, omegas: OmegaEstimates,
                              kappa: float) -> np.ndarray:
    """``A^{y,theta} Omega_y A^{y,theta}' + kappa A^{y,rho} Omega_nu(1) A^{y,rho}'``."""
    om_y = np.atleast_2d(omegas.omega_y)
    om_nu = np.atleast_2d(omegas.omega_nu1)
    if inv.yt.shape[1] != om_y.shape[0] or inv.yr.shape[1] != om_nu.shape[0]:
        raise DimensionError("inverse blocks and Omega matrices are not conformable")
    out = inv.yt @ om_y @ inv.yt.T + kappa * inv.yr @ om_nu @ inv.yr.T
    out = _check_psd(out, "Omega_theta")
    omegas.omega_theta = out
    return out


def joint_covariance(blocks: ABlocks, omegas: OmegaEstimates) -> np.ndarray:
    """Conditional variance ``A^-1 Omega A'^-1`` of ``D^-1 (phi_hat - phi0)``.

    ``Omega = diag(Omega_y, Omega_nu(1))``; the off-diagonal blocks of the
    result are the cross-sample covariances.
    """
    inv = partitioned_inverse(blocks).assemble(blocks.kappa)
    k, r = blocks.k_theta, blocks.k_rho
    om = np.zeros((k + r, k + r))
    om[:k, :k] = omegas.omega_y
    om[k:, k:] = omegas.omega_nu1
    return symmetrize(inv @ om @ inv.T)


def sandwich(A: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """``A^-1 Omega A^-1'``."""
    Ai = _inv(A, "A")
    return symmetrize(Ai @ np.atleast_2d(omega) @ Ai.T)


def twostep_se(A, B, omega_y, omega_nu, n: int, tau: int):
    """Two-step covariance with first-stage correction.

    ``(1/n) A^-1 Omega_y A^-1' + (1/tau) A^-1 B Omega_nu B' A^-1'`` where
    ``Omega_nu`` is the asymptotic variance of ``sqrt(tau) (rho_tilde - rho)``,
    i.e. ``A_nu_rho^-1 Omega_nu(1) A_nu_rho^-1`` for an M-estimator.

    Returns
    -------
    cov : ndarray
    se : ndarray
        Square roots of the diagonal.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Ai = _inv(A, "A")
    om_y = _check_psd(omega_y, "Omega_y")
    om_nu = _check_psd(omega_nu, "Omega_nu")
    cov = (Ai @ om_y @ Ai.T) / n + (Ai @ B @ om_nu @ B.T @ Ai.T) / tau
    cov = symmetrize(cov)
    return cov, np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _eigh_floor(m: np.ndarray):
    m = _check_psd(m, "covariance")
    w, v = np.linalg.eigh(m)
    top = max(w.max(), 0.0)
    floor = EIG_FLOOR * top if top > 0 else EIG_FLOOR
    return np.maximum(w, floor), v


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root; tiny negative eigenvalues are clipped to zero."""
    m = _check_psd(m, "covariance")
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return symmetrize((v * np.sqrt(w)) @ v.T)


def psd_inv_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric ``m^-1/2`` with eigenvalues floored at ``1e-12 * max``."""
    w, v = _eigh_floor(m)
    return symmetrize((v / np.sqrt(w)) @ v.T)


def pivotal_stat(theta_hat, omega_theta, n: int, theta0=None, R=None, r=None) -> np.ndarray:
    """``sqrt(n) Omega_theta^-1/2 (theta_hat - theta0)``.

    With a restriction ``R theta = r`` the statistic is
    ``sqrt(n) (R Omega_theta R')^-1/2 (R theta_hat - r)``.
    """
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    om = np.atleast_2d(np.asarray(omega_theta, dtype=float))
    if R is not None:
        R = np.atleast_2d(np.asarray(R, dtype=float))
        diff = R @ theta_hat - np.atleast_1d(np.asarray(r, dtype=float))
        om = R @ om @ R.T
    else:
        if theta0 is None:
            raise DimensionError("need theta0 or (R, r)")
        diff = theta_hat - np.atleast_1d(np.asarray(theta0, dtype=float))
    return np.sqrt(n) * psd_inv_sqrt(om) @ diff


def reference_blocks(spec: ModelSpec, phi0: ParamVector, shocks, kappa: float,
                     T: Optional[int] = None):
    """Population ``(ABlocks, OmegaEstimates)`` of the reference model at the truth.

    ``shocks`` are the true ``nu_1..nu_T`` (stationary) or ``nu0`` (unit root);
    the factor variance uses ``rho0`` and ``sigma_eta``.  Time-series blocks of
    the unit-root model are not defined and are returned as NaN.
    """
    rho = float(phi0.rho[0])
    lam, dlam = float(spec.loading(rho)), float(spec.loading.deriv(rho))
    shocks = np.atleast_1d(np.asarray(shocks, dtype=float))
    if spec.kind == "stationary":
        T = shocks.size
        k = 1 + T
        EZZ = np.zeros((k, k))
        EZZ[0, 0] = 2.0 * T
        EZZ[0, 1:] = EZZ[1:, 0] = lam
        EZZ[1:, 1:] = np.diag(np.full(T, lam * lam))
        EZdmu = np.r_[np.sum(dlam * shocks), lam * dlam * shocks]
    else:
        T = T or 1
        nu0 = float(shocks[0])
        EZZ = T * np.array([[2.0, lam], [lam, lam * lam]])
        EZdmu = T * np.array([dlam * nu0, lam * dlam * nu0])
    s2 = spec.sigma_eps ** 2
    if spec.kind == "stationary":
        if abs(rho) >= 1:
            raise DimensionError("stationary reference blocks need |rho0| < 1")
        var_nu = spec.sigma_eta ** 2 / (1.0 - rho * rho)
        ts = True
    else:
        ts = False
    if spec.is_moment:
        W = spec.criterion.w_cs(EZZ.shape[0])
        J = -EZZ
        a_yt = -J.T @ W @ J
        a_yr = -J.T @ W @ (-EZdmu)
        om_y = J.T @ W @ (s2 * EZZ) @ W.T @ J
        if ts:
            Wt = spec.criterion.w_ts()[0, 0]
            K = -var_nu
            a_nr = -K * Wt * K
            om_nu = K * Wt * (spec.sigma_eta ** 2 * var_nu) * Wt * K
    else:
        a_yt = -EZZ / s2
        a_yr = -EZdmu / s2
        om_y = EZZ / s2
        if ts:
            a_nr = -var_nu / spec.sigma_eta ** 2
            om_nu = var_nu / spec.sigma_eta ** 2
    if not ts:
        a_nr = om_nu = np.nan
    blocks = ABlocks(a_yt, a_yr, np.zeros((1, a_yt.shape[0])), [[a_nr]], kappa)
    return blocks, OmegaEstimates(symmetrize(om_y), np.array([[om_nu]]))
