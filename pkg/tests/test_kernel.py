import numpy as np
import pytest

from rtpr.kernels.kernel import KernelParams, cross_matrix, cross_vector, eval_kernel, gram_gradients, gram_matrix
from rtpr.utils.errors import DomainError, InputError, NumericError
from rtpr.utils.linalg import JITTER_SCALE, central_hessian, guarded_gradient, jittered

SIM_TRUTH = KernelParams(0.1, [10.0], [0.1])


class TestEvalKernel:

    def test_zero_distance_at_origin(self):
        assert eval_kernel(SIM_TRUTH, [0.0], [0.0]) == pytest.approx(0.1)

    def test_linear_term(self):
        assert eval_kernel(SIM_TRUTH, [1.0], [1.0]) == pytest.approx(0.2)

    def test_unit_distance(self):
        assert eval_kernel(SIM_TRUTH, [0.0], [1.0]) == pytest.approx(0.1 * np.exp(-5.0), rel=1e-12)
        assert eval_kernel(SIM_TRUTH, [0.0], [1.0]) == pytest.approx(6.7379e-4, rel=1e-4)

    def test_symmetric(self):
        params = KernelParams(0.7, [1.5, 0.3], [0.2, 0.0])
        u, v = [0.3, -1.0], [1.2, 0.4]
        assert eval_kernel(params, u, v) == eval_kernel(params, v, u)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            eval_kernel(SIM_TRUTH, [0.0, 1.0], [0.0])


class TestGramMatrix:

    def test_single_point(self):
        np.testing.assert_allclose(gram_matrix(SIM_TRUTH, [0.0]), [[0.1]])

    def test_two_points(self):
        expected = [[0.1, 0.1 * np.exp(-5.0)], [0.1 * np.exp(-5.0), 0.2]]
        np.testing.assert_allclose(gram_matrix(SIM_TRUTH, [0.0, 1.0]), expected, rtol=1e-12)

    def test_psd_after_jitter(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            X = rng.uniform(0.0, 3.0, size=(12, 1))
            K = jittered(gram_matrix(SIM_TRUTH, X))
            assert np.min(np.linalg.eigvalsh(K)) >= 0.0
            np.testing.assert_array_equal(K, K.T)

    def test_jitter_size(self):
        K = gram_matrix(SIM_TRUTH, np.linspace(0, 3, 5))
        delta = np.diag(jittered(K)) - np.diag(K)
        np.testing.assert_allclose(delta, JITTER_SCALE * np.mean(np.diag(K)), rtol=1e-6)

    def test_non_finite_entries(self):
        params = KernelParams(1.0, [1.0], [1e308])
        with pytest.raises(NumericError):
            with np.errstate(over="ignore"):
                gram_matrix(params, [[1e10]])


class TestCrossVector:

    def test_column_of_gram(self):
        X = np.array([[0.0], [0.7], [1.9]])
        np.testing.assert_allclose(cross_vector(SIM_TRUTH, X[1], X), gram_matrix(SIM_TRUTH, X)[:, 1], rtol=1e-14)

    def test_origin(self):
        np.testing.assert_allclose(cross_vector(SIM_TRUTH, [0.0], [[0.0], [1.0]]), [0.1, 0.1 * np.exp(-5.0)])

    def test_far_point_decays(self):
        params = KernelParams(0.1, [10.0], [0.0])
        assert np.all(np.abs(cross_vector(params, [100.0], [[0.0], [1.0]])) < 1e-300)

    def test_cross_matrix_shape(self):
        assert cross_matrix(SIM_TRUTH, np.zeros((4, 1)), np.zeros((7, 1))).shape == (4, 7)


class TestGramGradients:

    def test_log_theta0_is_se_part(self):
        params = KernelParams(0.4, [3.0], [0.0])
        X = np.linspace(0, 2, 4)
        np.testing.assert_allclose(gram_gradients(params, X)[0], gram_matrix(params, X), rtol=1e-14)

    def test_xi_derivative_is_outer_product(self):
        X = np.array([[0.5], [1.0], [2.0]])
        grads = gram_gradients(SIM_TRUTH, X, log_scale=False)
        np.testing.assert_allclose(grads[2], X @ X.T)

    def test_finite_differences(self):
        rng = np.random.default_rng(42)
        h = 1e-6
        for _ in range(10):
            params = KernelParams(rng.uniform(0.1, 2.0), rng.uniform(0.5, 5.0, size=2), rng.uniform(0.01, 1.0, size=2))
            X = rng.uniform(0.0, 3.0, size=(5, 2))
            free = params.to_free()
            grads = gram_gradients(params, X)
            for l in range(free.size):
                up, down = free.copy(), free.copy()
                up[l] += h
                down[l] -= h
                fd = (gram_matrix(KernelParams.from_free(up, 2), X) - gram_matrix(KernelParams.from_free(down, 2), X)) / (2 * h)
                K = gram_matrix(params, X)
                assert np.max(np.abs(grads[l] - fd)) < 1e-6 * (1 + np.max(np.abs(K)))


class TestKernelParams:

    def test_free_vector_inverse(self):
        params = KernelParams(0.3, [2.0, 5.0], [0.1, 0.0])
        back = KernelParams.from_free(params.to_free(), 2)
        assert back.theta0 == pytest.approx(0.3)
        np.testing.assert_allclose(back.eta, params.eta)
        np.testing.assert_allclose(back.xi, params.xi, atol=1e-15)

    @pytest.mark.parametrize("theta0,eta,xi", [(0.0, [1.0], [0.0]), (1.0, [-1.0], [0.0]), (1.0, [1.0], [-0.1])])
    def test_domain(self, theta0, eta, xi):
        with pytest.raises(DomainError):
            KernelParams(theta0, eta, xi)

    def test_frozen_arrays(self):
        with pytest.raises(ValueError):
            SIM_TRUTH.eta[0] = 1.0


def _bowl(x):
    return np.inf if x[0] > 1.0 else float(x[0] ** 2 + 3.0 * x[0] * x[1] + x[1] ** 2)


class TestFiniteDifferences:

    def test_guarded_gradient_inside(self):
        np.testing.assert_allclose(guarded_gradient(_bowl, np.array([0.2, -0.4]), 1e-4), [-0.8, -0.2], atol=1e-6)

    def test_guarded_gradient_at_edge(self):
        x = np.array([1.0 - 1e-5, 0.3])
        np.testing.assert_allclose(guarded_gradient(_bowl, x, 1e-4), [2 * x[0] + 0.9, 3 * x[0] + 0.6], atol=1e-5)

    def test_guarded_gradient_nowhere_finite(self):
        np.testing.assert_array_equal(guarded_gradient(lambda x: np.inf, np.array([0.5, 0.5]), 1e-4), 0.0)

    def test_central_hessian(self):
        np.testing.assert_allclose(central_hessian(_bowl, np.array([0.2, -0.4])), [[2.0, 3.0], [3.0, 2.0]], atol=1e-5)
