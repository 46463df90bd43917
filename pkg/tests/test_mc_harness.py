import csv
import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from xsts.errors import ConfigError, XstsError
from xsts.mc_harness import (StudyConfig, coverage, ks_statistic, run_replication, run_study,
                             summarize)

SMALL = dict(n=100, tau=100, T=2, n_reps=2)


class TestStudyConfig:
    @pytest.mark.parametrize("bad", [dict(n_reps=0), dict(n=1), dict(model="x"),
                                     dict(estimator="x"), dict(inference="x"),
                                     dict(rho0=1.0), dict(parallelism=0),
                                     dict(rho_source="x"), dict(criterion="x")])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            StudyConfig(**bad)

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ConfigError):
            StudyConfig.from_dict({"n": 10, "bogus": 1})

    def test_roundtrip(self):
        cfg = StudyConfig(n=50, gamma_grid=[-5.0, 5.0, 1.0])
        assert StudyConfig.from_dict(cfg.to_dict()) == cfg
        assert cfg.gamma_values()[0] == -5.0 and cfg.gamma_values()[-1] == 5.0
        assert cfg.gamma_values().size == 11

    def test_kappa(self):
        assert StudyConfig(n=100, tau=50).kappa == 2.0
        assert StudyConfig(model="unit_root", n=2500, tau=50).kappa == 1.0


class TestKS:
    def test_identical(self):
        a = np.random.default_rng(0).standard_normal(100)
        assert ks_statistic(a, a) == 0.0

    def test_normal_one_sample(self):
        a = np.random.default_rng(1).standard_normal(10_000)
        assert ks_statistic(a, cdf="norm") < 1.63 / math.sqrt(10_000)

    def test_disjoint(self):
        assert ks_statistic([0.0, 1.0], [5.0, 6.0]) == 1.0

    def test_errors(self):
        with pytest.raises(ValueError):
            ks_statistic([])
        with pytest.raises(ValueError):
            ks_statistic([1.0], [])
        with pytest.raises(ValueError):
            ks_statistic([1.0])


class TestCoverage:
    def test_infinite(self):
        rate, sd = coverage(np.full(10, -np.inf), np.full(10, np.inf), 3.0)
        assert rate == 1.0 and sd == 0.0

    def test_degenerate_at_truth(self):
        assert coverage(np.full(5, 2.0), np.full(5, 2.0), 2.0)[0] == 1.0

    def test_mc_sd(self):
        rate, sd = coverage([0, 0, 5, 5], [1, 1, 6, 6], 0.5)
        assert rate == 0.5
        assert sd == pytest.approx(math.sqrt(0.25 / 4))


class TestRunStudy:
    def test_smoke_summary_from_records(self):
        res = run_study(StudyConfig(**SMALL))
        assert res.summary["n_ok"] == 2
        assert summarize(res.records) == res.summary
        r = res.records[0]
        assert len(r["theta_hat"]) == 3 and len(r["ci_lo"]) == 3

    def test_replication_is_self_contained(self):
        cfg = StudyConfig(**SMALL)
        assert run_replication(cfg, 1) == run_study(cfg).records[1]

    def test_parallel_determinism(self):
        base = dict(SMALL, n_reps=12)
        a = run_study(StudyConfig(**base, parallelism=1))
        b = run_study(StudyConfig(**base, parallelism=4))
        assert a.payload() == b.payload()

    def test_seed_changes_results(self):
        a = run_study(StudyConfig(**SMALL, master_seed=1))
        b = run_study(StudyConfig(**SMALL, master_seed=2))
        assert a.payload() != b.payload()

    def test_failures_counted_and_fatal(self):
        cfg = StudyConfig(**dict(SMALL, n_reps=3), loading={"kind": "constant", "params": [0.0]})
        with pytest.raises(XstsError) as info:
            run_study(cfg)
        res = info.value.result
        assert res.summary["n_failed"] == 3
        assert all("error" in r for r in res.records)

    def test_archive(self, tmp_path):
        res = run_study(StudyConfig(**SMALL))
        res.write_archive(tmp_path / "arch")
        cfg = json.loads((tmp_path / "arch" / "config.json").read_text())
        assert StudyConfig.from_dict(cfg) == StudyConfig(**SMALL)
        summ = json.loads((tmp_path / "arch" / "summary.json").read_text())
        assert summ["summary"] == json.loads(json.dumps(res.summary))
        with open(tmp_path / "arch" / "reps.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert json.loads(rows[0]["theta_hat"]) == res.records[0]["theta_hat"]

    def test_rho_tilde_sd(self):
        rho, tau = 0.5, 2000
        res = run_study(StudyConfig(rho0=rho, tau=tau, n=20, T=1, n_reps=2000,
                                    inference="none", parallelism=4))
        pred = math.sqrt((1 - rho ** 2) / tau)
        assert abs(res.summary["rho_tilde_sd"] / pred - 1) < 0.05

    def test_expansion_slope(self):
        # first-order effect of the first-stage estimate on theta_hat
        res = run_study(StudyConfig(n=1000, tau=1000, T=2, n_reps=300, inference="none",
                                    expansion_check=True, parallelism=4))
        slope = np.array(res.summary["expansion_slope"])
        # beta is separated from rho by the period intercepts, so only the
        # shocks respond; their slope must be one
        lhs = np.array([r["expansion_lhs"] for r in res.records])
        assert np.max(np.abs(lhs[:, 0])) < 1e-8
        assert_allclose(slope[1:], 1.0, atol=0.05)

    def test_unit_root_bonferroni_smoke(self):
        cfg = StudyConfig(model="unit_root", n=400, tau=50, T=1, n_reps=3,
                          loading={"kind": "linear", "params": [0.0, 1.0]},
                          inference="bonferroni", gamma_grid=[-30.0, 10.0, 1.0],
                          table_grid_m=200, table_draws=2000, rho_grid_resolution=10)
        res = run_study(cfg)
        assert res.summary["n_ok"] == 3
        r = res.records[0]
        assert r["rho_L"] <= r["rho_hat"] <= r["rho_U"]
        assert np.all(np.array(r["ci_lo"]) <= np.array(r["ci_hi"]))
        assert "coverage" in res.summary and "scaled_error_sd" in res.summary
