"""Exact Kalman filter for linear-Gaussian problems.

Serves as the ground-truth posterior oracle that particle-filter error
curves are measured against.  The update schedule matches the bootstrap
filter: assimilate y_0 straight from the prior, then alternate
predict / update across the window.
"""
from __future__ import annotations

import numpy as np

from .dynamics import Covariance


def kalman_filter(
    model_matrix: np.ndarray,
    obs_matrix: np.ndarray,
    process_cov: Covariance | None,
    obs_cov: Covariance,
    prior_mean: np.ndarray,
    prior_cov: Covariance,
    observations: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Filtering means and covariances for observations at times 0..T-1."""
    m = np.asarray(model_matrix, dtype=float)
    h = np.asarray(obs_matrix, dtype=float)
    ys = np.asarray(observations, dtype=float)
    q = None if process_cov is None else process_cov.matrix
    r = obs_cov.matrix
    x = np.asarray(prior_mean, dtype=float).copy()
    p = prior_cov.matrix.copy()
    d = x.size
    means = np.empty((ys.shape[0], d))
    covs = np.empty((ys.shape[0], d, d))
    for k in range(ys.shape[0]):
        if k > 0:
            x = m @ x
            p = m @ p @ m.T
            if q is not None:
                p = p + q
        s = h @ p @ h.T + r
        gain = np.linalg.solve(s.T, (p @ h.T).T).T
        x = x + gain @ (ys[k] - h @ x)
        p = (np.eye(d) - gain @ h) @ p
        p = 0.5 * (p + p.T)
        means[k] = x
        covs[k] = p
    return means, covs
