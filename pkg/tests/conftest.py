import numpy as np
import pytest

from quassim.dynamics import Covariance, DynamicsModel, ObservationOperator
from quassim.fourdvar import AssimilationProblem


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_linear_problem(
    seed: int, dim: int = 3, window: int = 4, obs_dim: int | None = None
) -> AssimilationProblem:
    """Random stable linear-Gaussian problem with observations at every time."""
    r = np.random.default_rng(seed)
    obs_dim = obs_dim or dim
    m = r.normal(0, 0.5, (dim, dim))
    m *= 0.9 / max(1.0, np.max(np.abs(np.linalg.eigvals(m))))
    model = DynamicsModel(kind="linear", matrix=m)
    h = r.normal(0, 1.0, (obs_dim, dim))
    op = ObservationOperator(h)
    b_raw = r.normal(0, 1.0, (dim, dim))
    b_cov = Covariance(b_raw @ b_raw.T + dim * np.eye(dim))
    r_raw = r.normal(0, 0.4, (obs_dim, obs_dim))
    r_cov = Covariance(r_raw @ r_raw.T + obs_dim * np.eye(obs_dim))
    background = r.normal(0, 1.0, dim)
    observations = [(k, r.normal(0, 1.0, obs_dim)) for k in range(window)]
    return AssimilationProblem(
        background=background,
        background_cov=b_cov,
        observations=observations,
        obs_ops=op,
        obs_covs=r_cov,
        model=model,
        window=window,
    )


@pytest.fixture
def scalar_problem() -> AssimilationProblem:
    """The d=1 hand case: B=1, R=1, identity model and operator, x_b=0, y_0=2."""
    return AssimilationProblem(
        background=np.array([0.0]),
        background_cov=Covariance(np.array([[1.0]])),
        observations=[(0, np.array([2.0]))],
        obs_ops=ObservationOperator(np.array([[1.0]])),
        obs_covs=Covariance(np.array([[1.0]])),
        model=DynamicsModel(kind="linear", matrix=np.array([[1.0]])),
        window=1,
    )
