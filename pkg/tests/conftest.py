import numpy as np
import pytest

from rtpr.estimation.beta import Beta
from rtpr.kernels.kernel import KernelParams, gram_matrix
from rtpr.models.batch import BatchData
from rtpr.utils.linalg import jittered


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full optimizations and simulation reproductions (deselect with -m 'not slow')")


def make_batch(rng, I=1, J=3, n=6, phi=0.05, shift=None, theta=None):
    """GP curves on an evenly spaced design with iid noise; `shift` adds to the last curve of every group."""
    theta = theta or KernelParams(1.0, [2.0], [0.1])
    X = np.linspace(0.0, 3.0, n).reshape(-1, 1)
    L = np.linalg.cholesky(jittered(gram_matrix(theta, X)))
    designs, responses = [], []
    for _ in range(I):
        f = L @ rng.standard_normal(n)
        Y = f[None, :] + np.sqrt(phi) * rng.standard_normal((J, n))
        if shift is not None:
            Y[-1] += shift
        designs.append(X)
        responses.append(Y)
    return BatchData.from_arrays(designs, responses)


def make_beta(data, theta=None, phi=0.05, nu0=None, nu1=None):
    theta = theta or KernelParams(1.0, [2.0], [0.1])
    return Beta(tuple(theta for _ in range(data.I)), tuple(phi for _ in range(data.I)), nu0, nu1)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def batch(rng):
    return make_batch(rng)


def mirrored_inverse(N, lead):
    """
    Inverse of a symmetric matrix whose trailing block has its Schur complement
    (with respect to the first `lead` rows) replaced by its absolute value.
    Equals np.linalg.inv(N) when that Schur complement is positive definite.
    """
    N = np.array(N, dtype=float)
    V = N[:lead, lead:]
    coupling = V.T @ np.linalg.solve(N[:lead, :lead], V)
    evals, evecs = np.linalg.eigh(N[lead:, lead:] - coupling)
    N[lead:, lead:] = (evecs * np.abs(evals)) @ evecs.T + coupling
    return np.linalg.inv(N)
