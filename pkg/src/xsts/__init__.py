"""Estimation and inference for cross sections driven by common time-series shocks.

A panel ``y_it`` of ``n`` units over a short window of ``T`` periods loads on
an aggregate shock ``nu_t`` whose dynamics, indexed by ``rho``, are observed
over a long time series of length ``tau``.  The package simulates both
samples, estimates ``theta`` (cross-section) and ``rho`` (time series) either
in two steps or jointly, computes the asymptotic variance that accounts for
the first-stage estimate, samples the non-standard limit laws that arise when
the shock is near a unit root, and runs reproducible Monte Carlo studies.
"""
from . import avar, criteria, cross_section, factor_process, inference, limitdist, solve
from .avar import (ABlocks, asymptotic_variance_theta, hessian_blocks, omega_estimates,
                   partitioned_inverse, pivotal_stat, twostep_se)
from .criteria import ParamVector, identification_diagnostic, scores
from .cross_section import (Likelihood, Loading, ModelSpec, Moment, PanelData,
                            constant_loading, default_loading, linear_loading,
                            simulate_panel)
from .errors import (AlignmentError, ConfigError, DimensionError, DomainError,
                     NotPSDError, RegimeError, SingularityError, XstsError)
from .factor_process import (Backwards, FactorPath, Fixed, LocalToUnity, Stationary,
                             simulate_local_to_unity, simulate_stationary)
from .inference import ConfidenceRegion, bonferroni_union_ci, wald_ci
from .limitdist import (sample_df_ratio, sample_ltu_ratio, sample_ou_functionals,
                        sample_unitroot_theta_limit)
from .mc_harness import StudyConfig, run_study
from .solve import (estimate_joint, estimate_timeseries, estimate_twostep,
                    estimate_unit_root_ols)

__version__ = "0.1.0"
