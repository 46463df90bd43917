"""Command-line front end.

Usage::

    xsts simulate  --config CFG --out DIR [--seed S]
    xsts estimate  --config CFG --out DIR [--format json|csv]
    xsts study     --config CFG --out DIR [--seed S] [--parallel N]
    xsts limitdist --config CFG --out DIR [--seed S] [--format json|csv]
    xsts diagnose  --config CFG --out DIR [--format json|csv]

Every invocation reads one JSON config file.  Unknown keys are rejected and
input paths are checked before any work starts.  The logging level is taken
from ``XSTS_LOG`` (``error``, ``info`` or ``debug``).

Exit codes
----------
0 success, 1 unexpected internal error, 2 configuration error, 3 I/O error,
4 estimator did not converge (report still written), 5 study failure,
6 limit-law sampler failure, 7 diagnostic failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import Optional

import numpy as np

from ._rng import stream
from .avar import (asymptotic_variance_theta, hessian_blocks, omega_estimates,
                   partitioned_inverse, sandwich, twostep_se)
from .criteria import ParamVector, identification_diagnostic, scores
from .cross_section import Loading, Likelihood, ModelSpec, Moment, PanelData, simulate_panel
from .errors import ConfigError, SingularityError, XstsError
from .factor_process import (Backwards, FactorPath, Fixed, LocalToUnity, Stationary,
                             gaussian_innovations, simulate_local_to_unity,
                             simulate_stationary, student_t_innovations)
from .inference import bonferroni_union_ci, fixed_rho_variance, wald_ci
from .limitdist import (ltu_quantile_table, sample_df_ratio, sample_ltu_ratio,
                        write_quantile_csv)
from .mc_harness import StudyConfig, run_study
from .solve import (estimate_joint, estimate_timeseries, estimate_twostep,
                    estimate_unit_root_ols)

__all__ = ["main", "EXIT_CODES", "load_config"]

log = logging.getLogger("xsts")

EXIT_CODES = {
    "ok": 0,
    "internal": 1,
    "config": 2,
    "io": 3,
    "not_converged": 4,
    "study": 5,
    "sampler": 6,
    "diagnostic": 7,
}

# documented key set of every config section
SECTIONS = {
    "seed": None,
    "model": {"kind", "loading", "sigma_eps", "sigma_eta", "criterion",
              "weight_cs", "weight_ts"},
    "factors": {"rho", "gamma", "tau", "nu0", "start", "init", "innovations"},
    "panel": {"beta", "n", "T", "panel_start"},
    "data": {"factors", "panel"},
    "estimate": {"estimator", "level", "alpha1", "alpha2", "rho_grid_resolution",
                 "gamma_grid", "table_grid_m", "table_draws"},
    "study": set(StudyConfig.__dataclass_fields__),
    "limitdist": {"law", "gamma", "gamma_grid", "V0", "grid_m", "n_draws",
                  "n_quantiles", "antithetic"},
    "diagnose": {"beta0", "nu", "rho0", "rho_grid", "beta_grid", "tol"},
}

COMMAND_SECTIONS = {
    "simulate": {"seed", "model", "factors", "panel"},
    "estimate": {"seed", "model", "factors", "data", "estimate"},
    "study": {"seed", "study"},
    "limitdist": {"seed", "limitdist"},
    "diagnose": {"seed", "model", "diagnose"},
}


class CliFailure(Exception):
    def __init__(self, code: str, msg: str):
        super().__init__(msg)
        self.code = code


# ---------------------------------------------------------------- config

def load_config(path: str, command: str) -> dict:
    """Read and validate the JSON config of ``command``."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise CliFailure("io", f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliFailure("config", f"{path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise CliFailure("config", "config must be a JSON object")
    allowed = COMMAND_SECTIONS[command]
    unknown = set(cfg) - allowed
    if unknown:
        raise CliFailure("config", f"unknown top-level keys for {command}: {sorted(unknown)}")
    for name, value in cfg.items():
        keys = SECTIONS[name]
        if keys is None:
            continue
        if not isinstance(value, dict):
            raise CliFailure("config", f"section {name!r} must be an object")
        bad = set(value) - keys
        if bad:
            raise CliFailure("config", f"unknown keys in {name!r}: {sorted(bad)}")
    return cfg


def _model_spec(m: dict) -> ModelSpec:
    crit = m.get("criterion", "likelihood")
    if crit == "likelihood":
        criterion = Likelihood()
    elif crit == "moment":
        criterion = Moment(m.get("weight_cs"), m.get("weight_ts"))
    else:
        raise ConfigError(f"unknown criterion {crit!r}")
    loading = m.get("loading", {"kind": "reciprocal"})
    return ModelSpec(m.get("kind", "stationary"), Loading.from_dict(loading),
                     float(m.get("sigma_eps", 1.0)), float(m.get("sigma_eta", 1.0)), criterion)


def _start_spec(f: dict, T: int):
    start = dict(f.get("start", {"mode": "fixed", "tau0f": 0}))
    mode = start.pop("mode", "fixed")
    if mode == "fixed":
        return Fixed(int(start.get("tau0f", 0)))
    if mode == "backwards":
        return Backwards(float(start.get("upsilon", 1.0)), int(start.get("tau0f", 0)), T)
    raise ConfigError(f"unknown start mode {mode!r}")


def _innovations(f: dict):
    inn = f.get("innovations", {"dist": "gaussian"})
    dist = inn.get("dist", "gaussian")
    if dist == "gaussian":
        return gaussian_innovations
    if dist == "student_t":
        return student_t_innovations(float(inn["df"]))
    raise ConfigError(f"unknown innovation distribution {dist!r}")


def _read_factors(path: str, spec: ModelSpec, f: dict) -> FactorPath:
    """Factor CSV with the regime named by the model.  The coefficient in the
    config (``rho`` or ``gamma``) is nominal; estimation uses only the levels."""
    fp = FactorPath.from_csv(path, Stationary(0.0), spec.sigma_eta, f.get("nu0"))
    if spec.kind == "stationary":
        fp.regime = Stationary(float(f.get("rho", 0.0)))
    else:
        fp.regime = LocalToUnity(float(f.get("gamma", 0.0)), fp.tau)
    return fp


# ---------------------------------------------------------------- output

def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _flatten(obj, prefix=""):
    """``(key, value)`` rows of a nested report, lists indexed by position."""
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def _write_report(report: dict, out: str, stem: str, fmt: str) -> str:
    """JSON uses shortest round-trip float repr, so every double survives."""
    report = json.loads(json.dumps(report, default=_json_default))
    path = os.path.join(out, f"{stem}.{fmt}")
    with open(path, "w", newline="") as fh:
        if fmt == "json":
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        else:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["key", "value"])
            for k, v in _flatten(report):
                w.writerow([k, repr(v) if isinstance(v, float) else json.dumps(v)])
    log.info("wrote %s", path)
    return path


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: dict, out: str, fmt: str) -> int:
    spec = _model_spec(cfg.get("model", {}))
    f, p = cfg.get("factors", {}), cfg.get("panel", {})
    seed = int(cfg.get("seed", 0))
    n, T = int(p.get("n", 100)), int(p.get("T", 2))
    tau = int(f.get("tau", 100))
    beta = float(p.get("beta", 1.0))
    if spec.kind == "stationary":
        rho = float(f.get("rho", 0.5))
        init = f.get("init", "stationary")
        path = simulate_stationary(rho, spec.sigma_eta, tau, _start_spec(f, T), init,
                                   seed=stream(seed, 0), innovations=_innovations(f))
    else:
        path = simulate_local_to_unity(float(f.get("gamma", 0.0)), spec.sigma_eta, tau,
                                       float(f.get("nu0", 0.0)), seed=stream(seed, 0),
                                       innovations=_innovations(f))
    panel = simulate_panel(spec, beta, path, None, n, T, seed=stream(seed, 1),
                           panel_start=int(p.get("panel_start", 1)))
    path.to_csv(os.path.join(out, "factors.csv"))
    panel.to_csv(os.path.join(out, "panel.csv"))
    log.info("wrote factors.csv (tau=%d) and panel.csv (n=%d, T=%d)", tau, n, T)
    return 0


def _se(cov_over_n):
    return np.sqrt(np.clip(np.diag(cov_over_n), 0.0, None))


def _stationary_report(panel, path, spec, e: dict) -> tuple[dict, bool]:
    level = float(e.get("level", 0.95))
    which = e.get("estimator", "both")
    n, tau = panel.n, path.tau
    rho_tilde, _ = estimate_timeseries(path, spec)
    report = {"rho_tilde": rho_tilde, "n": n, "tau": tau, "kappa": n / tau}
    ok = True
    two = joint = None
    if which in ("twostep", "both"):
        two = estimate_twostep(panel, rho_tilde, spec, tau=tau)
        report["twostep"] = two.to_dict()
        ok &= two.converged
    if which in ("joint", "both"):
        joint = estimate_joint(panel, path, spec)
        report["joint"] = joint.to_dict()
        ok &= joint.converged
    if not ok:
        return report, False
    main_est = joint if joint is not None else two
    phi = main_est.phi_hat
    blocks = hessian_blocks(panel, path, phi, spec)
    om = omega_estimates(scores(panel, path, phi, spec), spec, blocks)
    om_theta = asymptotic_variance_theta(partitioned_inverse(blocks), om, blocks.kappa)
    a_nr_inv = np.linalg.inv(blocks.A_nu_rho)
    infl = a_nr_inv @ om.omega_nu1 @ a_nr_inv.T
    cov2, se2 = twostep_se(blocks.A_y_theta, blocks.A_y_rho, om.omega_y, infl, n, tau)
    cs_only = sandwich(blocks.A_y_theta, om.omega_y) / n
    report.update({
        "phi_hat": phi.to_dict(),
        "blocks": blocks.to_dict(),
        "omega_y": om.omega_y,
        "omega_nu1": om.omega_nu1,
        "omega_theta": om_theta,
        "se_joint": _se(om_theta / n),
        "se_twostep": se2,
        "cov_twostep": cov2,
        "se_cross_section_only": _se(cs_only),
        "ci": wald_ci(phi.theta, om_theta, n, level).to_dict(),
    })
    return report, True


def _unit_root_report(panel, path, spec, e: dict, seed: int) -> tuple[dict, bool]:
    rho_hat = estimate_unit_root_ols(path)
    est = estimate_twostep(panel, rho_hat, spec, tau=path.tau)
    report = {"rho_hat": rho_hat, "n": panel.n, "tau": path.tau,
              "kappa": panel.n / path.tau ** 2, "twostep": est.to_dict()}
    if not est.converged:
        return report, False
    sigma = fixed_rho_variance(panel, est.phi_hat, spec)
    report["phi_hat"] = est.phi_hat.to_dict()
    report["sigma_fixed_rho"] = sigma
    report["se_fixed_rho"] = _se(sigma / panel.n)
    lo, hi, step = e.get("gamma_grid", [-60.0, 20.0, 0.5])
    table = ltu_quantile_table(np.arange(lo, hi + 0.5 * step, step),
                               grid_m=int(e.get("table_grid_m", 1000)),
                               n_draws=int(e.get("table_draws", 10_000)), seed=seed)
    ci = bonferroni_union_ci(panel, path, spec, float(e.get("alpha1", 0.05)),
                             float(e.get("alpha2", 0.05)), table,
                             int(e.get("rho_grid_resolution", 25)))
    report["ci"] = ci.to_dict()
    return report, True


def cmd_estimate(cfg: dict, out: str, fmt: str) -> int:
    spec = _model_spec(cfg.get("model", {}))
    d, f = cfg.get("data", {}), cfg.get("factors", {})
    e = cfg.get("estimate", {})
    if e.get("estimator", "both") not in ("twostep", "joint", "both"):
        raise ConfigError(f"unknown estimator {e['estimator']!r}")
    try:
        panel = PanelData.from_csv(d["panel"])
        path = _read_factors(d["factors"], spec, f)
    except (OSError, KeyError, ValueError) as exc:
        raise CliFailure("io", f"cannot read data: {exc}") from None
    try:
        if spec.kind == "stationary":
            report, ok = _stationary_report(panel, path, spec, e)
        else:
            report, ok = _unit_root_report(panel, path, spec, e, int(cfg.get("seed", 0)))
    except (SingularityError, np.linalg.LinAlgError) as exc:
        # singular curvature: no usable estimate or variance
        report, ok = {"error": f"{type(exc).__name__}: {exc}"}, False
    report["model"] = {"kind": spec.kind, "loading": spec.loading.to_dict(),
                       "criterion": "moment" if spec.is_moment else "likelihood"}
    report["converged"] = ok
    _write_report(report, out, "estimate", fmt)
    if not ok:
        log.error("estimator did not converge; diagnostics written to the report")
        return EXIT_CODES["not_converged"]
    return 0


def cmd_study(cfg: dict, out: str, fmt: str) -> int:
    study = dict(cfg.get("study", {}))
    if "seed" in cfg:
        study["master_seed"] = int(cfg["seed"])
    try:
        config = StudyConfig.from_dict(study)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    try:
        result = run_study(config)
    except XstsError as exc:
        res = getattr(exc, "result", None)
        if res is not None:
            res.write_archive(out)
        raise CliFailure("study", str(exc)) from None
    result.write_archive(out)
    if fmt == "csv":
        _write_report(result.summary, out, "summary", "csv")
    log.info("study finished: %d reps in %.2fs", config.n_reps, result.runtime)
    return 0


def cmd_limitdist(cfg: dict, out: str, fmt: str) -> int:
    ld = cfg.get("limitdist", {})
    seed = int(cfg.get("seed", 0))
    law = ld.get("law", "df")
    grid_m = int(ld.get("grid_m", 5000))
    n_draws = int(ld.get("n_draws", 100_000))
    nq = int(ld.get("n_quantiles", 999))
    if nq < 1:
        raise ConfigError("n_quantiles must be positive")
    probs = np.arange(1, nq + 1) / (nq + 1)
    if law not in ("df", "ltu", "ltu_table"):
        raise ConfigError(f"unknown law {law!r}")
    try:
        if law == "ltu_table":
            lo, hi, step = ld.get("gamma_grid", [-60.0, 20.0, 0.5])
            table = ltu_quantile_table(np.arange(lo, hi + 0.5 * step, step), probs,
                                       grid_m, n_draws, seed)
        elif law == "df":
            q = sample_df_ratio(grid_m, n_draws, seed, bool(ld.get("antithetic", False))
                                ).quantiles(probs)
        else:
            q = sample_ltu_ratio(float(ld.get("gamma", 0.0)), grid_m, n_draws, seed,
                                 float(ld.get("V0", 0.0))).quantiles(probs)
    except (XstsError, ValueError, MemoryError) as exc:
        raise CliFailure("sampler", str(exc)) from None
    if law == "ltu_table":
        if fmt == "csv":
            table.to_csv(os.path.join(out, "quantile_table.csv"))
        else:
            _write_report({"gamma": table.gamma_grid, "probability": table.probs,
                           "quantile": table.quantiles, "meta": table.meta},
                          out, "quantile_table", "json")
        return 0
    if fmt == "csv":
        write_quantile_csv(os.path.join(out, "quantiles.csv"), probs, q)
    else:
        _write_report({"law": law, "grid_m": grid_m, "n_draws": n_draws, "seed": seed,
                       "probability": probs, "quantile": q}, out, "quantiles", "json")
    return 0


def cmd_diagnose(cfg: dict, out: str, fmt: str) -> int:
    spec = _model_spec(cfg.get("model", {}))
    dg = cfg.get("diagnose", {})
    rho0 = float(dg.get("rho0", 0.5))
    nu = dg.get("nu", [1.0] if spec.kind == "unit_root" else [1.0, -1.0])
    phi0 = ParamVector(float(dg.get("beta0", 1.0)), nu, rho0)
    lo, hi, num = dg.get("rho_grid", [-0.9, 0.9, 37])
    grid = np.linspace(float(lo), float(hi), int(num))
    try:
        report = identification_diagnostic(spec, phi0, grid, dg.get("beta_grid"),
                                           float(dg.get("tol", 1e-8)))
    except XstsError as exc:
        raise CliFailure("diagnostic", str(exc)) from None
    if not np.isfinite(report["profile_gap"]):
        raise CliFailure("diagnostic", "no rho grid point has a nonzero loading")
    _write_report(report, out, "diagnose", fmt)
    if not report["identified"]:
        log.warning("identification conditions fail for this model")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "study": cmd_study,
    "limitdist": cmd_limitdist,
    "diagnose": cmd_diagnose,
}


# ---------------------------------------------------------------- entry point

def _setup_logging():
    level = os.environ.get("XSTS_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "error"
    logging.basicConfig(level=levels[level], format="xsts %(levelname)s: %(message)s",
                        stream=sys.stderr, force=True)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xsts", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--parallel", type=int, help="worker threads for studies")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return p


def _check_inputs(command: str, cfg: dict, out: str):
    if command == "estimate":
        d = cfg.get("data", {})
        for key in ("factors", "panel"):
            if key not in d:
                raise CliFailure("config", f"data.{key} is required")
            if not os.path.isfile(d[key]):
                raise CliFailure("io", f"data file not found: {d[key]}")
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise CliFailure("io", f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise CliFailure("io", f"output directory {out} is not writable")


def main(argv: Optional[list] = None) -> int:
    _setup_logging()
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise CliFailure("config", "--seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        if args.parallel is not None:
            if args.command == "study":
                cfg.setdefault("study", {})["parallelism"] = args.parallel
            else:
                log.info("--parallel only affects studies")
        _check_inputs(args.command, cfg, args.out)
        return COMMANDS[args.command](cfg, args.out, args.format)
    except CliFailure as exc:
        log.error("%s", exc)
        return EXIT_CODES[exc.code]
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CODES["config"]
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_CODES["io"]
    except (XstsError, ValueError, np.linalg.LinAlgError) as exc:
        # remaining domain errors come from config values reaching constructors
        log.error("invalid input: %s", exc)
        return EXIT_CODES["config"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
