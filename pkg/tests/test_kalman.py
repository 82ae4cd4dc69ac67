import numpy as np

from quassim.dynamics import Covariance
from quassim.kalman import kalman_filter


def test_no_process_noise_matches_batch_least_squares():
    # Without process noise the filtering mean at time k is M^k times the
    # least-squares estimate of x0 given observations up to k.
    rng = np.random.default_rng(1)
    m = np.array([[0.9, 0.1], [-0.1, 0.85]])
    h = np.eye(2)
    prior_mean = np.array([0.5, -0.5])
    prior_cov = Covariance.isotropic(1.0, 2)
    obs_cov = Covariance.isotropic(0.25, 2)
    t_len = 5
    ys = rng.normal(0, 1, (t_len, 2))

    means, _ = kalman_filter(m, h, None, obs_cov, prior_mean, prior_cov, ys)

    for k in range(t_len):
        a = np.linalg.inv(prior_cov.matrix)
        rhs = a @ prior_mean
        power = np.eye(2)
        for j in range(k + 1):
            g = h @ power
            a = a + g.T @ np.linalg.inv(obs_cov.matrix) @ g
            rhs = rhs + g.T @ np.linalg.inv(obs_cov.matrix) @ ys[j]
            power = m @ power
        x0_hat = np.linalg.solve(a, rhs)
        expected = np.linalg.matrix_power(m, k) @ x0_hat
        assert np.max(np.abs(means[k] - expected)) < 1e-10


def test_perfect_observation_pins_state():
    m = np.eye(2)
    near_zero = Covariance.isotropic(1e-12, 2)
    means, covs = kalman_filter(
        m,
        np.eye(2),
        None,
        near_zero,
        np.zeros(2),
        Covariance.isotropic(1.0, 2),
        np.array([[3.0, -1.0]]),
    )
    assert np.max(np.abs(means[0] - [3.0, -1.0])) < 1e-6
    assert np.max(covs[0]) < 1e-10


def test_uncertainty_shrinks_with_observations():
    m = 0.95 * np.eye(1)
    means, covs = kalman_filter(
        m,
        np.eye(1),
        Covariance.isotropic(0.01, 1),
        Covariance.isotropic(0.5, 1),
        np.zeros(1),
        Covariance.isotropic(2.0, 1),
        np.zeros((6, 1)),
    )
    assert covs[-1][0, 0] < covs[0][0, 0] < 2.0
