import logging

import numpy as np
import pytest
from scipy import integrate, linalg, stats

from conftest import make_batch, make_beta, mirrored_inverse
from rtpr.estimation.beta import Beta
from rtpr.estimation.hlikelihood import (H0Curvature, adjusted_profile_m, blup_f, h0_curvature, h0_value,
                                         h1_beta_gradient, h1_value, laplace_B, r_score, solve_r)
from rtpr.kernels.kernel import KernelParams, gram_matrix
from rtpr.models.batch import BatchData, RandomEffects
from rtpr.models.config import ModelConfig, NuMode
from rtpr.models.covariance import build_covariance
from rtpr.utils.linalg import central_gradient, central_hessian, jittered


def _random_effects(rng, data):
    return RandomEffects(tuple(rng.uniform(0.5, 2.0, size=g.J + 1) for g in data.groups))


def _scalar_data(y):
    return BatchData.from_arrays([np.zeros((1, 1))], [np.array([[y]])])


def _laplace_error(nu, y, k=0.8, phi=0.5):
    """m minus the log of the exact integral of exp(h1) over (r_0, r_1) for one scalar tp-tp response."""
    beta = Beta((KernelParams(k, [1.0], [0.0]),), (phi,), nu, nu)
    config = ModelConfig.from_name("tp-tp", nu0=nu, nu1=nu)
    prior = stats.invgamma(nu, scale=nu - 1.0)
    kj = k * (1 + 1e-8)

    def integrand(u1, u0):
        r0, r1 = np.exp(u0), np.exp(u1)
        density = stats.norm.pdf(y, 0.0, np.sqrt(r0 * kj + phi * r1)) * prior.pdf(r0) * prior.pdf(r1)
        return density * r0 * r1

    # integrate over log r; the priors are negligible beyond 12 / sqrt(nu)
    half = 12.0 / np.sqrt(nu)
    total, _ = integrate.dblquad(integrand, -half, half, -half, half, epsabs=1e-13, epsrel=1e-10)
    return adjusted_profile_m(config, beta, _scalar_data(y)).value - np.log(total)


class TestH0:

    def test_scalar_closed_form(self):
        data = _scalar_data(0.7)
        theta = KernelParams(1.0, [1.0], [0.0])
        beta = Beta((theta,), (1.0,))
        config = ModelConfig.from_name("tp-tp", nu0=2.0, nu1=2.0)
        effects = RandomEffects((np.ones(2),))
        k = 1.0 + 1e-8
        expected = (stats.norm.logpdf(0.7, 0.3, 1.0) + stats.norm.logpdf(0.3, 0.0, np.sqrt(k)) - 2.0)
        assert h0_value(config, beta, effects, [np.array([0.3])], data) == pytest.approx(expected, rel=1e-10)

    def test_integrates_to_h1(self):
        data = _scalar_data(0.7)
        beta = Beta((KernelParams(0.8, [1.0], [0.0]),), (0.4,))
        config = ModelConfig.from_name("tp-tp", nu0=3.0, nu1=3.0)
        effects = RandomEffects((np.array([1.3, 0.6]),))
        total, _ = integrate.quad(lambda f: np.exp(h0_value(config, beta, effects, [np.array([f])], data)), -15, 15,
                                  epsabs=1e-13, epsrel=1e-12)
        assert np.log(total) == pytest.approx(h1_value(config, beta, effects, data), abs=1e-6)

    def test_decreases_away_from_data(self, batch):
        config = ModelConfig.from_name("gp-tp")
        beta = make_beta(batch)
        effects = RandomEffects.ones(batch)
        f_hat = blup_f(config, beta, effects, batch, 0)
        values = [h0_value(config, beta, effects, [f_hat + c], batch) for c in (0.0, 0.5, 1.0)]
        assert values[0] > values[1] > values[2]


class TestBlup:

    def test_scalar(self):
        data = _scalar_data(1.5)
        beta = Beta((KernelParams(2.0, [1.0], [0.0]),), (0.5,))
        config = ModelConfig.from_name("tp-tp")
        effects = RandomEffects((np.array([1.5, 3.0]),))
        k = 2.0 * (1 + 1e-8)
        expected = 1.5 * k * 1.5 / (k * 1.5 + 0.5 * 3.0)
        np.testing.assert_allclose(blup_f(config, beta, effects, data, 0), [expected], rtol=1e-12)

    def test_equals_marginal_conditional_mean(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            n, J = int(rng.integers(1, 9)), int(rng.integers(1, 4))
            data = make_batch(rng, J=J, n=n)
            beta = make_beta(data, phi=rng.uniform(0.05, 1.0))
            config = ModelConfig.from_name("tp-tp")
            effects = _random_effects(rng, data)
            model = beta.configure(config)
            K = jittered(gram_matrix(beta.thetas[0], data.groups[0].X))
            C = build_covariance(model, effects, K, 0, J)
            rc = effects.group(0)
            marginal = rc[0] * np.kron(np.ones((1, J)), K) @ linalg.solve(C, data.groups[0].y, assume_a="pos")
            np.testing.assert_allclose(blup_f(config, beta, effects, data, 0), marginal, rtol=1e-8, atol=1e-8)

    def test_gpr_posterior_mean(self, rng):
        data = make_batch(rng, J=1, n=7)
        beta = make_beta(data, phi=0.2)
        K = jittered(gram_matrix(beta.thetas[0], data.groups[0].X))
        expected = K @ linalg.solve(K + 0.2 * np.eye(7), data.groups[0].y)
        f = blup_f(ModelConfig.from_name("gp-gp"), beta, RandomEffects.ones(data), data, 0)
        np.testing.assert_allclose(f, expected, rtol=1e-8, atol=1e-10)

    def test_maximizes_h0(self, batch):
        config = ModelConfig.from_name("tp-tp")
        beta = make_beta(batch)
        effects = RandomEffects((np.array([1.2, 0.7, 1.5, 2.0]),))
        f_hat = blup_f(config, beta, effects, batch, 0)
        grad = central_gradient(lambda f: h0_value(config, beta, effects, [f], batch), f_hat)
        assert np.max(np.abs(grad)) < 1e-4


class TestH1:

    def test_even(self, batch):
        config = ModelConfig.from_name("tp-tp")
        beta = make_beta(batch)
        effects = RandomEffects((np.array([1.2, 0.7, 1.5, 2.0]),))
        assert h1_value(config, beta, effects, batch) == h1_value(config, beta, effects, batch.negated())

    def test_joint_reduces_to_etpr_marginal(self, rng):
        data = make_batch(rng, J=1, n=5)
        beta = make_beta(data, phi=0.3, nu0=2.0, nu1=2.0)
        r = 1.4
        effects = RandomEffects((np.array([r, r]),))
        K = jittered(gram_matrix(beta.thetas[0], data.groups[0].X))
        C = r * (K + 0.3 * np.eye(5))
        expected = stats.multivariate_normal(np.zeros(5), C).logpdf(data.groups[0].y) \
            + stats.invgamma(2.0, scale=1.0).logpdf(r)
        value = h1_value(ModelConfig.from_name("etpr-joint", nu0=2.0), beta, effects, data)
        assert value == pytest.approx(expected, rel=1e-10)


class TestRScore:

    @pytest.mark.parametrize("name", ["gp-tp", "tp-tp", "tp-gp", "etpr-joint"])
    def test_finite_differences(self, name):
        rng = np.random.default_rng(42)
        h = 1e-6
        for _ in range(10):
            data = make_batch(rng, J=int(rng.integers(1, 4)), n=int(rng.integers(2, 6)))
            beta = make_beta(data, phi=rng.uniform(0.05, 0.5))
            config = ModelConfig.from_name(name, nu0=rng.uniform(1.5, 4.0), nu1=rng.uniform(1.5, 4.0))
            layout = config.free_layout(data.groups[0].J)
            rc = layout.components(rng.uniform(0.5, 2.0, size=layout.q))
            effects = RandomEffects((rc,))
            score = r_score(config, beta, effects, data, 0)
            s = layout.free_values(rc)
            for a in range(layout.q):
                up, down = s.copy(), s.copy()
                up[a] += h
                down[a] -= h
                fd = (h1_value(config, beta, RandomEffects((layout.components(up),)), data)
                      - h1_value(config, beta, RandomEffects((layout.components(down),)), data)) / (2 * h)
                assert score[a] == pytest.approx(fd, rel=1e-5, abs=1e-6)


class TestSolveR:

    def test_scores_vanish(self, rng):
        data = make_batch(rng, I=2, J=4, n=6, shift=1.5)
        beta = make_beta(data)
        config = ModelConfig.from_name("gp-tp")
        r_hat = solve_r(config, beta, data)
        for i in range(data.I):
            assert np.max(np.abs(r_score(config, beta, r_hat, data, i))) < 1e-5
            assert np.all(r_hat.group(i) > 0)

    def test_outlying_curve_has_largest_effect(self, rng):
        data = make_batch(rng, J=5, n=8, phi=0.02, shift=2.0)
        r_hat = solve_r(ModelConfig.from_name("gp-tp"), make_beta(data, phi=0.02), data)
        curves = r_hat.group(0)[1:]
        assert np.argmax(curves) == 4

    def test_gp_gp_has_no_random_effects(self, batch):
        r_hat = solve_r(ModelConfig.from_name("gp-gp"), make_beta(batch), batch)
        np.testing.assert_array_equal(r_hat.group(0), np.ones(batch.groups[0].J + 1))

    def test_even_invariance(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            data = make_batch(rng, J=3, n=5, shift=1.0)
            beta = make_beta(data)
            config = ModelConfig.from_name("tp-tp")
            np.testing.assert_array_equal(solve_r(config, beta, data).group(0),
                                          solve_r(config, beta, data.negated()).group(0))

    def test_deterministic(self, batch):
        config = ModelConfig.from_name("tp-tp")
        beta = make_beta(batch)
        np.testing.assert_array_equal(solve_r(config, beta, batch).group(0), solve_r(config, beta, batch).group(0))


class TestLaplace:

    def test_analytic_matches_finite_differences(self, rng):
        data = make_batch(rng, J=3, n=5, shift=1.0)
        beta = make_beta(data)
        for name in ("gp-tp", "tp-tp", "etpr-joint"):
            config = ModelConfig.from_name(name)
            r_hat = solve_r(config, beta, data)
            analytic = laplace_B(config, beta, r_hat, data)
            fd = laplace_B(config, beta, r_hat, data, method="finite-difference")
            np.testing.assert_allclose(analytic, fd, rtol=1e-4, atol=1e-4 * np.max(np.abs(analytic)))

    def test_block_diagonal_over_groups(self, rng):
        data = make_batch(rng, I=2, J=2, n=4)
        config = ModelConfig.from_name("gp-tp")
        beta = make_beta(data)
        B = laplace_B(config, beta, solve_r(config, beta, data), data)
        assert B.shape == (4, 4)
        np.testing.assert_array_equal(B[:2, 2:], 0.0)

    def test_positive_definite_on_clean_data(self, rng):
        data = make_batch(rng, J=4, n=8)
        config = ModelConfig.from_name("gp-tp")
        beta = make_beta(data)
        B = laplace_B(config, beta, solve_r(config, beta, data), data)
        assert np.min(np.linalg.eigvalsh(B)) > 0


class TestAdjustedProfile:

    def test_gp_gp_is_log_marginal(self, batch):
        beta = make_beta(batch, phi=0.1)
        profile = adjusted_profile_m(ModelConfig.from_name("gp-gp"), beta, batch)
        K = jittered(gram_matrix(beta.thetas[0], batch.groups[0].X))
        C = np.kron(np.ones((3, 3)), K) + 0.1 * np.eye(18)
        expected = stats.multivariate_normal(np.zeros(18), C).logpdf(batch.groups[0].y)
        assert profile.value == pytest.approx(expected, rel=1e-10)
        assert profile.log_det_term == 0.0

    @pytest.mark.parametrize("nu,y", [(60.0, 0.3), (60.0, -0.8), (60.0, 1.1), (60.0, 0.0), (100.0, 0.3),
                                      (100.0, -1.4), (100.0, 0.7), (200.0, 0.3), (200.0, -0.5), (200.0, 1.9)])
    def test_laplace_fidelity(self, nu, y):
        assert abs(_laplace_error(nu, y)) < 0.05

    def test_laplace_error_shrinks_with_nu(self):
        errors = [abs(_laplace_error(nu, 0.3)) for nu in (2.0, 10.0, 50.0)]
        assert errors[0] > errors[1] > errors[2]

    def test_even(self, batch):
        beta = make_beta(batch)
        config = ModelConfig.from_name("gp-tp")
        assert adjusted_profile_m(config, beta, batch).value == adjusted_profile_m(config, beta, batch.negated()).value


class TestBetaGradient:

    def test_finite_differences(self, rng):
        data = make_batch(rng, I=2, J=3, n=5)
        config = ModelConfig.from_name("tp-tp", nu0=2.5, nu1=3.0, nu_mode=NuMode.ESTIMATED)
        beta = Beta((KernelParams(0.9, [1.5], [0.2]), KernelParams(1.2, [2.5], [0.05])), (0.1, 0.2), 2.5, 3.0)
        effects = _random_effects(rng, data)
        x = beta.to_free(config)
        analytic = h1_beta_gradient(config, beta, effects, data)
        fd = central_gradient(lambda v: h1_value(config, Beta.from_free(v, config, 2, 1), effects, data), x)
        np.testing.assert_allclose(analytic, fd, rtol=1e-4, atol=1e-5)


class TestH0Curvature:

    def test_matches_finite_difference_hessian(self, rng):
        data = make_batch(rng, J=2, n=3)
        beta = make_beta(data, theta=KernelParams(1.0, [1.0], [0.1]), phi=0.2)
        config = ModelConfig.from_name("tp-tp", nu0=2.0, nu1=2.0)
        layout = config.free_layout(2)
        rc = np.array([1.2, 0.8, 1.5])
        effects = RandomEffects((rc,))
        f = blup_f(config, beta, effects, data, 0) + 0.1

        def h0_at(x):
            return h0_value(config, beta, RandomEffects((layout.components(x[3:]),)), [x[:3]], data)

        x = np.concatenate([f, layout.free_values(rc)])
        curvature = h0_curvature(config, beta, effects, f, data, 0)
        np.testing.assert_allclose(curvature.full(), -central_hessian(h0_at, x), rtol=1e-3, atol=1e-3)

    def test_leading_inverse_is_block_of_inverse(self, rng):
        data = make_batch(rng, J=3, n=4)
        config = ModelConfig.from_name("gp-tp")
        beta = make_beta(data)
        r_hat = solve_r(config, beta, data)
        f_hat = blup_f(config, beta, r_hat, data, 0)
        curvature = h0_curvature(config, beta, r_hat, f_hat, data, 0)
        expected = mirrored_inverse(curvature.full(), 4)[:4, :4]
        np.testing.assert_allclose(curvature.leading_inverse(), expected, rtol=1e-6, atol=1e-10)

    def test_gp_gp_is_plug_in_covariance(self, batch):
        config = ModelConfig.from_name("gp-gp")
        beta = make_beta(batch, phi=0.1)
        effects = RandomEffects.ones(batch)
        curvature = h0_curvature(config, beta, effects, blup_f(config, beta, effects, batch, 0), batch, 0)
        K = jittered(gram_matrix(beta.thetas[0], batch.groups[0].X))
        expected = np.linalg.inv(3 / 0.1 * np.eye(6) + np.linalg.inv(K))
        assert curvature.q == 0
        np.testing.assert_allclose(curvature.leading_inverse(), expected, rtol=1e-6, atol=1e-10)

    def test_indefinite_schur_keeps_plug_in_floor(self, caplog):
        N_ff = np.diag([2.0, 3.0])
        curvature = H0Curvature(N_ff, np.linalg.inv(N_ff), np.eye(2), np.diag([-1.0, 4.0]), np.eye(2), 1.0)
        with caplog.at_level(logging.WARNING):
            H_in = curvature.leading_inverse()
        assert "not positive definite" in caplog.text
        np.testing.assert_allclose(H_in, mirrored_inverse(curvature.full(), 2)[:2, :2], rtol=1e-10)
        assert np.min(np.linalg.eigvalsh(H_in - curvature.base)) >= -1e-12
        assert np.all(np.diag(H_in) > np.diag(curvature.base))
