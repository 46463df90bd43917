"""Replication engine and statistical checks for Monte Carlo studies.

Replication ``r`` of a study draws everything from the stream
``(master_seed, r)``, so per-replication results, and therefore summaries,
do not depend on ``parallelism``.
"""
from __future__ import annotations

import csv
import json
import math
import os
import platform
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from ._rng import stream
from .avar import (hessian_blocks, omega_estimates, partitioned_inverse,
                   asymptotic_variance_theta, pivotal_stat, reference_blocks, twostep_se)
from .criteria import ParamVector, scores
from .cross_section import Likelihood, Loading, ModelSpec, Moment, simulate_panel
from .errors import ConfigError, XstsError
from .factor_process import Backwards, Fixed, simulate_local_to_unity, simulate_stationary
from .inference import bonferroni_union_ci, wald_ci
from .limitdist import ltu_quantile_table
from .solve import (estimate_joint, estimate_timeseries, estimate_twostep,
                    estimate_unit_root_ols)

__all__ = [
    "StudyConfig",
    "StudyResult",
    "run_study",
    "run_replication",
    "summarize",
    "ks_statistic",
    "coverage",
]

FAIL_FRACTION = 0.01


@dataclass
class StudyConfig:
    """Design of a Monte Carlo study.

    ``model`` is ``"stationary"`` or ``"unit_root"``.  Stationary designs use
    ``rho0``; unit-root designs use ``gamma0`` and the scaled initial
    condition ``nu0``.  ``start`` is ``{"mode": "fixed", "tau0f": k}`` or
    ``{"mode": "backwards", "upsilon": u, "tau0f": k}`` (``T`` is taken from
    the study).  ``rho_source = "truth"`` replaces the first-stage estimate by
    the true coefficient.
    """

    model: str = "stationary"
    beta0: float = 1.0
    rho0: float = 0.5
    gamma0: float = 0.0
    nu0: float = 1.0
    sigma_eps: float = 1.0
    sigma_eta: float = 1.0
    loading: dict = field(default_factory=lambda: {"kind": "reciprocal", "params": []})
    criterion: str = "likelihood"
    n: int = 1000
    tau: int = 1000
    T: int = 2
    start: dict = field(default_factory=lambda: {"mode": "backwards", "upsilon": 1.0, "tau0f": 0})
    estimator: str = "twostep"
    rho_source: str = "estimate"
    inference: str = "wald"
    level: float = 0.95
    alpha1: float = 0.05
    alpha2: float = 0.05
    rho_grid_resolution: int = 25
    gamma_grid: list = field(default_factory=lambda: [-60.0, 20.0, 0.5])
    table_grid_m: int = 1000
    table_draws: int = 10_000
    expansion_check: bool = False
    n_reps: int = 100
    master_seed: int = 0
    parallelism: int = 1

    def __post_init__(self):
        if self.model not in ("stationary", "unit_root"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.n_reps < 1 or self.n < 2 or self.tau < 2 or self.T < 1:
            raise ConfigError("n_reps, n, tau and T must be positive (n, tau >= 2)")
        if self.estimator not in ("twostep", "joint"):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.inference not in ("wald", "bonferroni", "none"):
            raise ConfigError(f"unknown inference {self.inference!r}")
        if self.rho_source not in ("estimate", "truth"):
            raise ConfigError(f"unknown rho_source {self.rho_source!r}")
        if self.criterion not in ("likelihood", "moment"):
            raise ConfigError(f"unknown criterion {self.criterion!r}")
        if self.model == "stationary" and abs(self.rho0) >= 1:
            raise ConfigError("stationary design needs |rho0| < 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown study keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def spec(self) -> ModelSpec:
        crit = Moment() if self.criterion == "moment" else Likelihood()
        return ModelSpec(self.model, Loading.from_dict(self.loading),
                         self.sigma_eps, self.sigma_eta, crit)

    def start_spec(self):
        mode = self.start.get("mode", "fixed")
        if mode == "fixed":
            return Fixed(int(self.start.get("tau0f", 0)))
        if mode == "backwards":
            return Backwards(float(self.start.get("upsilon", 1.0)),
                             int(self.start.get("tau0f", 0)), self.T)
        raise ConfigError(f"unknown start mode {mode!r}")

    @property
    def kappa(self) -> float:
        return self.n / self.tau ** 2 if self.model == "unit_root" else self.n / self.tau

    def gamma_values(self) -> np.ndarray:
        lo, hi, step = self.gamma_grid
        return np.arange(lo, hi + 0.5 * step, step)


@dataclass
class StudyResult:
    config: dict
    records: list
    summary: dict
    runtime: float
    environment: dict

    def payload(self) -> str:
        """Numeric payload used for reproducibility comparisons (no timings)."""
        return json.dumps({"records": self.records, "summary": self.summary}, sort_keys=True)

    def write_archive(self, directory) -> None:
        """``config.json``, ``reps.csv`` and ``summary.json`` in ``directory``."""
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "config.json"), "w") as fh:
            json.dump(self.config, fh, indent=2, sort_keys=True)
        with open(os.path.join(directory, "summary.json"), "w") as fh:
            json.dump({"summary": self.summary, "runtime": self.runtime,
                       "environment": self.environment}, fh, indent=2, sort_keys=True)
        cols = sorted({k for r in self.records for k in r})
        with open(os.path.join(directory, "reps.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.records:
                w.writerow([json.dumps(r.get(c)) for c in cols])


def ks_statistic(sample_a, sample_b=None, cdf=None) -> float:
    """Two-sample KS distance, or one-sample distance against ``cdf``.

    ``cdf`` may be a callable or a scipy distribution name such as ``"norm"``.
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("empty sample")
    if sample_b is not None:
        b = np.asarray(sample_b, dtype=float).ravel()
        if b.size == 0:
            raise ValueError("empty sample")
        return float(stats.ks_2samp(a, b).statistic)
    if cdf is None:
        raise ValueError("need a second sample or a reference cdf")
    return float(stats.kstest(a, cdf).statistic)


def coverage(lo, hi, true_value):
    """Fraction of intervals ``[lo, hi]`` containing the truth, and its MC sd."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    hit = (lo <= true_value) & (true_value <= hi)
    rate = float(np.mean(hit))
    return rate, math.sqrt(rate * (1.0 - rate) / hit.size)


_TABLES: dict = {}


def _table(cfg: StudyConfig):
    key = (tuple(cfg.gamma_grid), cfg.table_grid_m, cfg.table_draws, cfg.master_seed)
    if key not in _TABLES:
        _TABLES[key] = ltu_quantile_table(cfg.gamma_values(), grid_m=cfg.table_grid_m,
                                          n_draws=cfg.table_draws, seed=cfg.master_seed)
    return _TABLES[key]


def _stationary_rep(cfg: StudyConfig, spec: ModelSpec, rng) -> dict:
    path = simulate_stationary(cfg.rho0, cfg.sigma_eta, cfg.tau, cfg.start_spec(), seed=rng)
    panel = simulate_panel(spec, cfg.beta0, path, cfg.rho0, cfg.n, cfg.T, seed=rng)
    nu_true = path.window(panel.panel_start, panel.panel_start + cfg.T - 1)
    phi0 = ParamVector(cfg.beta0, nu_true, cfg.rho0)
    rho_tilde, _ = estimate_timeseries(path, spec)
    if cfg.estimator == "joint":
        est = estimate_joint(panel, path, spec)
    else:
        rho_in = cfg.rho0 if cfg.rho_source == "truth" else rho_tilde
        est = estimate_twostep(panel, rho_in, spec, tau=cfg.tau)
    if not est.converged:
        raise XstsError("estimator did not converge")
    phi = est.phi_hat
    blocks = hessian_blocks(panel, path, phi, spec)
    om = omega_estimates(scores(panel, path, phi, spec), spec, blocks)
    inv = partitioned_inverse(blocks)
    om_theta = asymptotic_variance_theta(inv, om, blocks.kappa)
    a_nr_inv = np.linalg.inv(blocks.A_nu_rho)
    infl_var = a_nr_inv @ om.omega_nu1 @ a_nr_inv.T
    cov2, se2 = twostep_se(blocks.A_y_theta, blocks.A_y_rho, om.omega_y, infl_var,
                           cfg.n, cfg.tau)
    tb, to = reference_blocks(spec, phi0, nu_true, cfg.kappa)
    om_true = asymptotic_variance_theta(partitioned_inverse(tb), to, cfg.kappa)
    rec = {
        "theta0": phi0.theta.tolist(),
        "theta_hat": phi.theta.tolist(),
        "rho_hat": float(phi.rho[0]),
        "rho_tilde": rho_tilde,
        "iterations": est.iterations,
        "var_theta_hat": (np.diag(om_theta) / cfg.n).tolist(),
        "var_twostep": np.diag(cov2).tolist(),
        "var_theta_true": (np.diag(om_true) / cfg.n).tolist(),
        "pivot": pivotal_stat(phi.theta, om_theta, cfg.n, theta0=phi0.theta).tolist(),
    }
    if cfg.inference == "wald":
        ci = wald_ci(phi.theta, om_theta, cfg.n, cfg.level)
        rec["ci_lo"], rec["ci_hi"] = ci.lo.tolist(), ci.hi.tolist()
    if cfg.expansion_check:
        at_truth = estimate_twostep(panel, cfg.rho0, spec, tau=cfg.tau)
        a_inv_b = np.linalg.solve(tb.A_y_theta, tb.A_y_rho)[:, 0]
        rec["expansion_lhs"] = (math.sqrt(cfg.n) * (est.theta_hat - at_truth.theta_hat)).tolist()
        rec["expansion_rhs"] = (-a_inv_b * math.sqrt(cfg.n) * (rho_tilde - cfg.rho0)).tolist()
    return rec


def _unit_root_rep(cfg: StudyConfig, spec: ModelSpec, rng) -> dict:
    path = simulate_local_to_unity(cfg.gamma0, cfg.sigma_eta, cfg.tau, cfg.nu0, seed=rng)
    rho_true = path.coefficient
    panel = simulate_panel(spec, cfg.beta0, cfg.nu0, rho_true, cfg.n, cfg.T, seed=rng)
    theta0 = np.array([cfg.beta0, cfg.nu0])
    rho_hat = estimate_unit_root_ols(path)
    rho_in = rho_true if cfg.rho_source == "truth" else rho_hat
    est = estimate_twostep(panel, rho_in, spec, tau=cfg.tau)
    if not est.converged:
        raise XstsError("estimator did not converge")
    rec = {
        "theta0": theta0.tolist(),
        "theta_hat": est.theta_hat.tolist(),
        "rho_hat": rho_hat,
        "scaled_error": (math.sqrt(cfg.n) * (est.theta_hat - theta0)).tolist(),
        "tau_rho_error": cfg.tau * (rho_hat - rho_true),
    }
    if cfg.inference == "bonferroni":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ci = bonferroni_union_ci(panel, path, spec, cfg.alpha1, cfg.alpha2, _table(cfg),
                                     cfg.rho_grid_resolution)
        rec["ci_lo"], rec["ci_hi"] = ci.lo.tolist(), ci.hi.tolist()
        rec["rho_L"], rec["rho_U"] = ci.details["rho_L"], ci.details["rho_U"]
    return rec


def run_replication(cfg: StudyConfig, rep: int) -> dict:
    """One replication; failures are returned as records with ``ok = False``."""
    spec = cfg.spec()
    rng = stream(cfg.master_seed, rep)
    try:
        if cfg.model == "stationary":
            rec = _stationary_rep(cfg, spec, rng)
        else:
            rec = _unit_root_rep(cfg, spec, rng)
        rec["ok"] = True
    except (XstsError, np.linalg.LinAlgError) as exc:
        rec = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
    rec["rep"] = rep
    return rec


def _slope(lhs, rhs):
    den = float(np.dot(rhs, rhs))
    return float(np.dot(lhs, rhs) / den) if den > 0 else float("nan")


def summarize(records: list, config: Optional[dict] = None) -> dict:
    """Summary statistics recomputed from per-replication records alone."""
    good = [r for r in records if r.get("ok")]
    out = {"n_reps": len(records), "n_ok": len(good), "n_failed": len(records) - len(good)}
    if not good:
        return out
    th = np.array([r["theta_hat"] for r in good])
    th0 = np.array([r["theta0"] for r in good])
    err = th - th0
    out["bias"] = err.mean(axis=0).tolist()
    out["empirical_sd"] = err.std(axis=0, ddof=1).tolist() if len(good) > 1 else None
    if "var_theta_true" in good[0]:
        for key, name in (("var_theta_true", "predicted_sd_truth"),
                          ("var_theta_hat", "mean_estimated_sd"),
                          ("var_twostep", "mean_twostep_sd")):
            v = np.array([r[key] for r in good])
            out[name] = np.sqrt(v.mean(axis=0)).tolist()
        piv = np.array([r["pivot"] for r in good])
        out["pivot_ks"] = [ks_statistic(piv[:, j], cdf="norm") for j in range(piv.shape[1])]
        out["rejection_rate_5pct"] = np.mean(np.abs(piv) > stats.norm.ppf(0.975), axis=0).tolist()
    if "ci_lo" in good[0]:
        lo = np.array([r["ci_lo"] for r in good])
        hi = np.array([r["ci_hi"] for r in good])
        # the truth may differ across replications, so count hits directly
        hits = (lo <= th0) & (th0 <= hi)
        rates = hits.mean(axis=0)
        out["coverage"] = rates.tolist()
        out["coverage_mc_sd"] = np.sqrt(rates * (1 - rates) / len(good)).tolist()
    if "scaled_error" in good[0]:
        se = np.array([r["scaled_error"] for r in good])
        out["scaled_error_mean"] = se.mean(axis=0).tolist()
        out["scaled_error_sd"] = se.std(axis=0, ddof=1).tolist() if len(good) > 1 else None
    if "rho_tilde" in good[0]:
        rt = np.array([r["rho_tilde"] for r in good])
        out["rho_tilde_sd"] = float(rt.std(ddof=1)) if len(good) > 1 else None
    if "expansion_lhs" in good[0]:
        lhs = np.array([r["expansion_lhs"] for r in good])
        rhs = np.array([r["expansion_rhs"] for r in good])
        out["expansion_slope"] = [_slope(lhs[:, j], rhs[:, j]) for j in range(lhs.shape[1])]
    return out


def _environment() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__,
            "platform": platform.platform()}


def run_study(config: StudyConfig) -> StudyResult:
    """Run ``config.n_reps`` replications on ``config.parallelism`` threads.

    Raises
    ------
    XstsError
        When more than 1% of replications fail.
    """
    t0 = time.perf_counter()
    if config.model == "unit_root" and config.inference == "bonferroni":
        _table(config)
    if config.parallelism == 1:
        records = [run_replication(config, r) for r in range(config.n_reps)]
    else:
        with ThreadPoolExecutor(max_workers=config.parallelism) as ex:
            records = list(ex.map(lambda r: run_replication(config, r), range(config.n_reps)))
    summary = summarize(records)
    result = StudyResult(config.to_dict(), records, summary,
                         time.perf_counter() - t0, _environment())
    if summary["n_failed"] > FAIL_FRACTION * config.n_reps:
        err = XstsError(f"{summary['n_failed']} of {config.n_reps} replications failed")
        err.result = result
        raise err
    return result
