import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import random_problem
from xsts.avar import (ABlocks, InverseBlocks, OmegaEstimates, asymptotic_variance_theta,
                       fd_hessian_blocks, hessian_blocks, joint_covariance, omega_estimates,
                       partitioned_inverse, pivotal_stat, psd_inv_sqrt, psd_sqrt,
                       reference_blocks, sandwich, twostep_se)
from xsts.criteria import ParamVector, ScoreBundle, scores
from xsts.cross_section import Likelihood, ModelSpec, Moment, constant_loading
from xsts.errors import NotPSDError, SingularityError
from xsts.factor_process import simulate_stationary
from xsts.solve import estimate_joint


class TestPartitionedInverse:
    def test_scalar_example(self):
        inv = partitioned_inverse(ABlocks(2.0, 1.0, 0.0, 3.0, 1.0))
        assert inv.yt[0, 0] == pytest.approx(0.5, rel=1e-15)
        assert inv.yr[0, 0] == pytest.approx(-1 / 6, rel=1e-15)
        assert inv.nr[0, 0] == pytest.approx(1 / 3, rel=1e-15)

    def test_block_diagonal(self):
        P = np.array([[2.0, 0.3], [0.3, 1.0]])
        inv = partitioned_inverse(ABlocks(P, np.zeros((2, 1)), np.zeros((1, 2)), [[4.0]], 1.0))
        assert_allclose(inv.yt, np.linalg.inv(P), rtol=1e-14)
        assert_array_equal(inv.yr, 0.0)

    @pytest.mark.parametrize("seed", range(100))
    def test_reassembly(self, seed):
        rng = np.random.default_rng(seed)
        k, r = 3, 2
        M = rng.standard_normal((k + r, k + r)) + 4 * np.eye(k + r)
        kappa = rng.uniform(0.1, 10)
        blocks = ABlocks(M[:k, :k], M[:k, k:], M[k:, :k], M[k:, k:], kappa)
        A = blocks.assemble()
        Ainv = partitioned_inverse(blocks).assemble(kappa)
        assert np.max(np.abs(A @ Ainv - np.eye(k + r))) < 1e-10
        assert_allclose(Ainv, np.linalg.inv(A), atol=1e-12)

    def test_singular_schur(self):
        with pytest.raises(SingularityError):
            partitioned_inverse(ABlocks(1.0, 1.0, 1.0, 1.0, 1.0))


class TestOmegaTheta:
    def test_scalar_example(self):
        # 1 * 2 * 1 + 4 * 0.5 * 3 * 0.5
        inv = InverseBlocks(np.array([[1.0]]), np.array([[0.5]]), np.zeros((1, 1)), np.eye(1))
        om = asymptotic_variance_theta(inv, OmegaEstimates([[2.0]], [[3.0]]), 4.0)
        assert om[0, 0] == pytest.approx(5.0, rel=1e-15)

    def test_decoupled(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((3, 3))
        om_y = a @ a.T
        inv = InverseBlocks(a, np.zeros((3, 1)), np.zeros((1, 3)), np.eye(1))
        om = asymptotic_variance_theta(inv, OmegaEstimates(om_y, [[2.0]]), 7.0)
        assert_allclose(om, a @ om_y @ a.T, rtol=1e-13)

    def test_kappa_to_zero(self):
        inv = InverseBlocks(np.eye(1), np.ones((1, 1)), np.zeros((1, 1)), np.eye(1))
        vals = [asymptotic_variance_theta(inv, OmegaEstimates([[1.0]], [[1.0]]), k)[0, 0]
                for k in (1.0, 1e-3, 1e-9)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] == pytest.approx(1.0, abs=1e-8)

    def test_symmetric_output(self):
        rng = np.random.default_rng(2)
        M = rng.standard_normal((4, 4)) + 3 * np.eye(4)
        blocks = ABlocks(M[:3, :3], M[:3, 3:], M[3:, :3], M[3:, 3:], 2.0)
        b = rng.standard_normal((3, 3))
        om = asymptotic_variance_theta(partitioned_inverse(blocks),
                                       OmegaEstimates(b @ b.T, [[1.5]]), 2.0)
        assert_array_equal(om, om.T)


class TestTwostepSe:
    def test_scalar_example(self):
        cov, se = twostep_se(-1.0, 2.0, 1.0, 1.0, 100, 25)
        assert cov[0, 0] == pytest.approx(0.17, rel=1e-14)
        assert se[0] == pytest.approx(math.sqrt(0.17), rel=1e-14)

    def test_b_zero(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        om = np.diag([1.0, 2.0, 3.0])
        cov, _ = twostep_se(A, np.zeros(3), om, [[5.0]], 200, 10)
        assert_allclose(cov, sandwich(A, om) / 200, rtol=1e-14)

    def test_doubling_tau(self):
        c1, _ = twostep_se(-1.0, 2.0, 0.0, 1.0, 100, 25)
        c2, _ = twostep_se(-1.0, 2.0, 0.0, 1.0, 100, 50)
        assert c2[0, 0] == pytest.approx(c1[0, 0] / 2, rel=1e-15)

    def test_matches_omega_theta_when_block_triangular(self):
        spec, panel, path, _ = random_problem(1)
        est = estimate_joint(panel, path, spec)
        blocks = hessian_blocks(panel, path, est.phi_hat, spec)
        om = omega_estimates(scores(panel, path, est.phi_hat, spec), spec)
        om_theta = asymptotic_variance_theta(partitioned_inverse(blocks), om, blocks.kappa)
        ai = np.linalg.inv(blocks.A_nu_rho)
        cov, _ = twostep_se(blocks.A_y_theta, blocks.A_y_rho, om.omega_y,
                            ai @ om.omega_nu1 @ ai.T, panel.n, path.tau)
        assert_allclose(cov, om_theta / panel.n, rtol=1e-10)


class TestHessianBlocks:
    @pytest.mark.parametrize("crit", [Likelihood(), Moment()], ids=["ml", "gmm"])
    @pytest.mark.parametrize("seed", range(5))
    def test_analytic_vs_finite_difference(self, crit, seed):
        spec, panel, path, phi = random_problem(seed, criterion=crit)
        a = hessian_blocks(panel, path, phi, spec).assemble()
        b = fd_hessian_blocks(panel, path, phi, spec).assemble()
        assert np.max(np.abs(a - b)) / np.max(np.abs(a)) < 1e-5

    def test_unit_root_finite_difference(self):
        spec, panel, path, phi = random_problem(2, kind="unit_root")
        a = hessian_blocks(panel, path, phi, spec).assemble()
        b = fd_hessian_blocks(panel, path, phi, spec).assemble()
        assert np.max(np.abs(a - b)) / np.max(np.abs(a)) < 1e-5

    def test_constant_loading_gives_zero_coupling(self):
        spec, panel, path, phi = random_problem(3)
        cspec = ModelSpec(loading=constant_loading(2.0))
        blocks = hessian_blocks(panel, path, phi, cspec)
        assert_array_equal(blocks.A_y_rho, 0.0)
        assert_array_equal(blocks.A_nu_theta, 0.0)

    def test_kappa_realized(self):
        spec, panel, path, phi = random_problem(0, n=200, tau=300)
        assert hessian_blocks(panel, path, phi, spec).kappa == pytest.approx(200 / 300)


class TestOmegaEstimates:
    def test_ar1_information(self):
        path = simulate_stationary(0.5, 1.0, 200_000, seed=5)
        spec, panel, _, _ = random_problem(0)
        phi = ParamVector(1.0, [0.0, 0.0, 0.0], 0.5)
        om = omega_estimates(scores(panel, path, phi, spec), spec)
        assert abs(om.omega_nu1[0, 0] / (4 / 3) - 1) < 0.03

    @pytest.mark.parametrize("seed", range(3))
    def test_gmm_ml_sandwich_agree(self, seed):
        spec, panel, path, phi = random_problem(seed)
        gspec = ModelSpec(loading=spec.loading, criterion=Moment())
        ml = omega_estimates(scores(panel, path, phi, spec), spec)
        gm = omega_estimates(scores(panel, path, phi, gspec), gspec)
        a_ml = hessian_blocks(panel, path, phi, spec)
        a_gm = hessian_blocks(panel, path, phi, gspec)
        assert_allclose(sandwich(a_gm.A_y_theta, gm.omega_y),
                        sandwich(a_ml.A_y_theta, ml.omega_y), rtol=1e-8)
        assert_allclose(sandwich(a_gm.A_nu_rho, gm.omega_nu1),
                        sandwich(a_ml.A_nu_rho, ml.omega_nu1), rtol=1e-8)

    def test_zero_scores(self):
        b = ScoreBundle(np.zeros((10, 3)), np.zeros((5, 1)), 5, 5)
        om = omega_estimates(b, ModelSpec())
        assert_array_equal(om.omega_y, 0.0)
        assert_array_equal(om.omega_nu1, 0.0)

    def test_scale_invariance(self):
        # rescaling the likelihood (sigma_eps, sigma_eta) leaves Omega_theta unchanged
        spec, panel, path, _ = random_problem(4)
        out = []
        for s in (1.0, 3.0):
            sp = ModelSpec(loading=spec.loading, sigma_eps=s, sigma_eta=s)
            est = estimate_joint(panel, path, sp)
            blocks = hessian_blocks(panel, path, est.phi_hat, sp)
            om = omega_estimates(scores(panel, path, est.phi_hat, sp), sp)
            out.append(asymptotic_variance_theta(partitioned_inverse(blocks), om, blocks.kappa))
        assert_allclose(out[0], out[1], rtol=1e-8)

    def test_joint_covariance_theta_block(self):
        spec, panel, path, _ = random_problem(5)
        est = estimate_joint(panel, path, spec)
        blocks = hessian_blocks(panel, path, est.phi_hat, spec)
        om = omega_estimates(scores(panel, path, est.phi_hat, spec), spec)
        full = joint_covariance(blocks, om)
        om_theta = asymptotic_variance_theta(partitioned_inverse(blocks), om, blocks.kappa)
        assert_allclose(full[:-1, :-1], om_theta, rtol=1e-10)
        assert_array_equal(full, full.T)


class TestPivot:
    def test_zero(self):
        assert_array_equal(pivotal_stat([1.0, 2.0], np.eye(2), 50, theta0=[1.0, 2.0]), 0.0)

    def test_scalar_example(self):
        # sqrt(100) * 0.1 / sqrt(4)
        assert pivotal_stat([1.1], [[4.0]], 100, theta0=[1.0])[0] == pytest.approx(0.5, rel=1e-12)

    def test_restriction(self):
        om = np.array([[2.0, 0.5], [0.5, 1.0]])
        R = np.array([[1.0, -1.0]])
        # R om R' = 2 - 1 + 1 = 2
        val = pivotal_stat([1.3, 1.0], om, 8, R=R, r=[0.0])[0]
        assert val == pytest.approx(math.sqrt(8) * 0.3 / math.sqrt(2), rel=1e-12)

    def test_not_psd(self):
        with pytest.raises(NotPSDError):
            pivotal_stat([1.0], [[-1.0]], 10, theta0=[0.0])

    def test_roots(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 4))
        m = a @ a.T + np.eye(4)
        r = psd_sqrt(m)
        assert_allclose(r @ r, m, rtol=1e-12)
        assert_allclose(psd_inv_sqrt(m) @ r, np.eye(4), atol=1e-12)


class TestReferenceBlocks:
    def test_matches_sample_hessian(self):
        from xsts.cross_section import simulate_panel
        from xsts.factor_process import Backwards
        spec = ModelSpec()
        path = simulate_stationary(0.5, 1.0, 200_000, Backwards(1.0, 0, 2), seed=1)
        panel = simulate_panel(spec, 1.0, path, None, 200_000, 2, seed=2)
        phi0 = ParamVector(1.0, path.window(1, 2), 0.5)
        sample = hessian_blocks(panel, path, phi0, spec)
        pop, om = reference_blocks(spec, phi0, phi0.nu, sample.kappa)
        assert_allclose(sample.A_y_theta, pop.A_y_theta, rtol=0.02, atol=0.01)
        assert_allclose(sample.A_y_rho, pop.A_y_rho, rtol=0.02, atol=0.01)
        assert_allclose(sample.A_nu_rho, pop.A_nu_rho, rtol=0.02)
        # AR(1): A_nu_rho = -1 / (1 - rho^2), Omega_nu(1) = 1 / (1 - rho^2)
        assert pop.A_nu_rho[0, 0] == pytest.approx(-4 / 3)
        assert om.omega_nu1[0, 0] == pytest.approx(4 / 3)
