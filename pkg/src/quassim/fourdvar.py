"""Strong-constraint 4DVAR: cost, gradient, and a line-searched descent.

The objective is the background misfit plus observation misfits accumulated
while the model propagates the candidate initial state across the window.
Covariance inverses are applied through cached Cholesky solves.  Gradients
are exact adjoint recursions for linear models and central finite
differences otherwise, keeping the nonlinear gradient independent of the
model implementation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import Covariance, DynamicsModel, ObservationOperator, propagate_batch
from .errors import DivergenceError, ShapeError

ARMIJO_C = 1e-4
SHRINK = 0.5
GRAD_TOL = 1e-8
MAX_ITERS = 1000
FD_REL_STEP = 1e-5


@dataclass
class AssimilationProblem:
    """Everything the 4DVAR objective needs, with per-time observations.

    observations is a list of (time index k, observation vector); obs_ops and
    obs_covs may be single shared instances or per-observation lists.
    """

    background: np.ndarray
    background_cov: Covariance
    observations: list[tuple[int, np.ndarray]]
    obs_ops: list[ObservationOperator]
    obs_covs: list[Covariance]
    model: DynamicsModel
    window: int

    def __post_init__(self):
        self.background = np.ascontiguousarray(self.background, dtype=np.float64)
        d = self.background.size
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.background_cov.dim != d:
            raise ShapeError("background covariance dimension != state dimension")
        if self.model.state_dim != d:
            raise ShapeError("model dimension != state dimension")
        n_obs = len(self.observations)
        if isinstance(self.obs_ops, ObservationOperator):
            self.obs_ops = [self.obs_ops] * n_obs
        if isinstance(self.obs_covs, Covariance):
            self.obs_covs = [self.obs_covs] * n_obs
        if len(self.obs_ops) != n_obs or len(self.obs_covs) != n_obs:
            raise ShapeError("need one observation operator and covariance per observation")
        self.observations = [
            (int(k), np.ascontiguousarray(y, dtype=np.float64))
            for k, y in self.observations
        ]
        for (k, y), op, cov in zip(self.observations, self.obs_ops, self.obs_covs):
            if not 0 <= k < self.window:
                raise ValueError(f"observation time {k} outside window [0, {self.window})")
            if op.state_dim != d or y.shape != (op.obs_dim,) or cov.dim != op.obs_dim:
                raise ShapeError("observation shapes mutually inconsistent")

    @property
    def state_dim(self) -> int:
        return self.background.size


def trajectory(problem: AssimilationProblem, x0: np.ndarray) -> np.ndarray:
    """States x_0 .. x_{window-1} under the deterministic model."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (problem.state_dim,):
        raise ShapeError(f"x0 shape {x0.shape} != ({problem.state_dim},)")
    states = np.empty((problem.window, problem.state_dim))
    states[0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, problem.window):
            states[k] = propagate_batch(problem.model, states[k - 1][None, :])[0]
    if not np.all(np.isfinite(states)):
        raise DivergenceError("trajectory diverged while evaluating the cost")
    return states


def cost(problem: AssimilationProblem, x0: np.ndarray) -> float:
    """Background plus observation misfit; always >= 0."""
    states = trajectory(problem, x0)
    dx = states[0] - problem.background
    total = 0.5 * float(dx @ problem.background_cov.solve(dx))
    for (k, y), op, cov in zip(problem.observations, problem.obs_ops, problem.obs_covs):
        r = y - op.apply(states[k])
        total += 0.5 * float(r @ cov.solve(r))
    return total


def cost_batch(problem: AssimilationProblem, x0s: np.ndarray) -> np.ndarray:
    """Vectorized cost over (K, d) initial states; non-finite rows become inf."""
    x = np.asarray(x0s, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != problem.state_dim:
        raise ShapeError("expected a (K, d) batch of initial states")
    dx = x - problem.background
    totals = 0.5 * np.einsum("kd,kd->k", dx, problem.background_cov.solve(dx.T).T)
    obs_by_time: dict[int, list[int]] = {}
    for i, (k, _) in enumerate(problem.observations):
        obs_by_time.setdefault(k, []).append(i)
    current = x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(problem.window):
            if k > 0:
                current = propagate_batch(problem.model, current)
            for i in obs_by_time.get(k, []):
                _, y = problem.observations[i]
                op, cov = problem.obs_ops[i], problem.obs_covs[i]
                r = y[None, :] - op.apply_batch(current)
                totals += 0.5 * np.einsum("kp,kp->k", r, cov.solve(r.T).T)
    totals[~np.isfinite(totals)] = np.inf
    return totals


def gradient(problem: AssimilationProblem, x0: np.ndarray) -> np.ndarray:
    """Exact adjoint gradient for linear models, central differences otherwise."""
    x0 = np.asarray(x0, dtype=np.float64)
    if problem.model.kind != "linear":
        return _fd_gradient(problem, x0)
    states = trajectory(problem, x0)
    weighted: dict[int, np.ndarray] = {}
    for (k, y), op, cov in zip(problem.observations, problem.obs_ops, problem.obs_covs):
        r = y - op.apply(states[k])
        w = op.matrix.T @ cov.solve(r)
        weighted[k] = weighted.get(k, 0.0) + w
    mt = problem.model.matrix.T
    lam = np.zeros(problem.state_dim)
    for k in range(problem.window - 1, -1, -1):
        if k < problem.window - 1:
            lam = mt @ lam
        if k in weighted:
            lam = lam + weighted[k]
    return problem.background_cov.solve(x0 - problem.background) - lam


def _fd_gradient(problem: AssimilationProblem, x0: np.ndarray) -> np.ndarray:
    grad = np.empty_like(x0)
    for i in range(x0.size):
        h = FD_REL_STEP * max(1.0, abs(x0[i]))
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (cost(problem, xp) - cost(problem, xm)) / (2.0 * h)
    return grad


@dataclass
class MinimizeResult:
    x_opt: np.ndarray
    cost_trace: np.ndarray
    converged: bool
    diverged: bool = False


def minimize(problem: AssimilationProblem, x_init: np.ndarray) -> MinimizeResult:
    """Gradient descent with Armijo backtracking on the 4DVAR objective.

    Stops when the gradient norm drops below 1e-8 or after 1000 iterations;
    the returned cost trace is non-increasing.  A trajectory blow-up during
    line search keeps the best point found so far and sets the diverged flag.
    """
    x = np.asarray(x_init, dtype=np.float64).copy()
    try:
        current = cost(problem, x)
    except DivergenceError:
        return MinimizeResult(x, np.array([np.inf]), converged=False, diverged=True)
    trace = [current]
    diverged = False
    for _ in range(MAX_ITERS):
        g = gradient(problem, x)
        gnorm = float(np.linalg.norm(g))
        if gnorm < GRAD_TOL:
            return MinimizeResult(x, np.asarray(trace), converged=True, diverged=diverged)
        step = 1.0
        accepted = False
        for _ in range(60):
            candidate = x - step * g
            try:
                c_new = cost(problem, candidate)
            except DivergenceError:
                c_new = np.inf
                diverged = True
            if np.isfinite(c_new) and c_new <= current - ARMIJO_C * step * gnorm**2:
                x, current = candidate, c_new
                accepted = True
                break
            step *= SHRINK
        if not accepted:
            break
        trace.append(current)
    return MinimizeResult(x, np.asarray(trace), converged=False, diverged=diverged)
