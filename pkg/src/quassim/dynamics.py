"""Toy dynamical models, observation operators, and Gaussian covariances.

Two model families: an arbitrary linear map, and Lorenz-63 integrated with
classic RK4 (canonical sigma=10, rho=28, beta=8/3 by default).  Gaussian
noise is always drawn through a cached Cholesky factor of the covariance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DivergenceError, ShapeError
from .rngutil import rng_from

_SYM_TOL = 1e-12


class Covariance:
    """Symmetric positive-definite matrix with cached Cholesky solves."""

    def __init__(self, matrix: np.ndarray):
        m = np.ascontiguousarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError("covariance must be a square matrix")
        if not np.all(np.isfinite(m)):
            raise ValueError("covariance entries must be finite")
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.T)) > _SYM_TOL * scale:
            raise ValueError("covariance must be symmetric")
        self.matrix = 0.5 * (m + m.T)
        try:
            self._chol = np.linalg.cholesky(self.matrix)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive definite") from exc

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def cholesky(self) -> np.ndarray:
        return self._chol

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve C x = rhs via the cached factor (never forms C^-1)."""
        return scipy.linalg.cho_solve((self._chol, True), np.asarray(rhs, float))

    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Zero-mean Gaussian draws with this covariance; (size, dim) or (dim,)."""
        n = 1 if size is None else size
        z = rng.standard_normal((n, self.dim))
        draws = z @ self._chol.T
        return draws[0] if size is None else draws

    @classmethod
    def diagonal(cls, variances) -> "Covariance":
        return cls(np.diag(np.asarray(variances, dtype=np.float64)))

    @classmethod
    def isotropic(cls, variance: float, dim: int) -> "Covariance":
        return cls(variance * np.eye(dim))


@dataclass(frozen=True)
class ObservationOperator:
    """Linear map from state space to observation space."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1:
            raise ShapeError("observation operator must be a (p, d) matrix, p >= 1")
        if not np.all(np.isfinite(m)):
            raise ValueError("observation operator entries must be finite")
        object.__setattr__(self, "matrix", m)

    @property
    def obs_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def state_dim(self) -> int:
        return self.matrix.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=np.float64)

    def apply_batch(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.matrix.T

    @classmethod
    def identity(cls, dim: int) -> "ObservationOperator":
        return cls(np.eye(dim))


@dataclass(frozen=True)
class DynamicsModel:
    """One assimilation-step propagator: linear matrix or Lorenz-63 RK4."""

    kind: str
    matrix: np.ndarray | None = None
    dt: float = 0.01
    substeps: int = 1
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0

    def __post_init__(self):
        if self.kind == "linear":
            if self.matrix is None:
                raise ValueError("linear model requires a matrix")
            m = np.ascontiguousarray(self.matrix, dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ShapeError("linear model matrix must be square")
            if not np.all(np.isfinite(m)):
                raise ValueError("linear model matrix must be finite")
            object.__setattr__(self, "matrix", m)
        elif self.kind == "lorenz63":
            if self.dt <= 0 or self.substeps < 1:
                raise ValueError("lorenz63 requires dt > 0 and substeps >= 1")
        else:
            raise ValueError(f"unknown model kind {self.kind!r}")

    @property
    def state_dim(self) -> int:
        return 3 if self.kind == "lorenz63" else self.matrix.shape[0]

    def to_dict(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear", "matrix": self.matrix.tolist()}
        return {
            "kind": "lorenz63",
            "dt": self.dt,
            "substeps": self.substeps,
            "sigma": self.sigma,
            "rho": self.rho,
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DynamicsModel":
        if d["kind"] == "linear":
            return cls(kind="linear", matrix=np.asarray(d["matrix"], dtype=float))
        return cls(
            kind="lorenz63",
            dt=float(d.get("dt", 0.01)),
            substeps=int(d.get("substeps", 1)),
            sigma=float(d.get("sigma", 10.0)),
            rho=float(d.get("rho", 28.0)),
            beta=float(d.get("beta", 8.0 / 3.0)),
        )


def _lorenz_rhs(x: np.ndarray, sigma: float, rho: float, beta: float) -> np.ndarray:
    out = np.empty_like(x)
    out[..., 0] = sigma * (x[..., 1] - x[..., 0])
    out[..., 1] = x[..., 0] * (rho - x[..., 2]) - x[..., 1]
    out[..., 2] = x[..., 0] * x[..., 1] - beta * x[..., 2]
    return out


def _rk4_lorenz(x: np.ndarray, model: DynamicsModel) -> np.ndarray:
    dt = model.dt
    for _ in range(model.substeps):
        k1 = _lorenz_rhs(x, model.sigma, model.rho, model.beta)
        k2 = _lorenz_rhs(x + 0.5 * dt * k1, model.sigma, model.rho, model.beta)
        k3 = _lorenz_rhs(x + 0.5 * dt * k2, model.sigma, model.rho, model.beta)
        k4 = _lorenz_rhs(x + dt * k3, model.sigma, model.rho, model.beta)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def propagate(model: DynamicsModel, x: np.ndarray) -> np.ndarray:
    """Advance one assimilation step; raises DivergenceError on blow-up."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.state_dim,):
        raise ShapeError(f"state shape {x.shape} != ({model.state_dim},)")
    with np.errstate(over="ignore", invalid="ignore"):
        out = model.matrix @ x if model.kind == "linear" else _rk4_lorenz(x, model)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("model trajectory diverged to non-finite values")
    return out


def propagate_batch(model: DynamicsModel, x: np.ndarray) -> np.ndarray:
    """Advance a (K, d) batch of states one assimilation step."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.state_dim:
        raise ShapeError(f"batch shape {x.shape} incompatible with d={model.state_dim}")
    return x @ model.matrix.T if model.kind == "linear" else _rk4_lorenz(x, model)


def observe(
    op: ObservationOperator,
    x: np.ndarray,
    noise_cov: Covariance | None,
    seed: int | np.random.Generator,
) -> np.ndarray:
    """Apply the operator and add Gaussian noise (none when noise_cov is None)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (op.state_dim,):
        raise ShapeError(f"state shape {x.shape} != ({op.state_dim},)")
    y = op.apply(x)
    if noise_cov is not None:
        if noise_cov.dim != op.obs_dim:
            raise ShapeError("noise covariance dimension != observation dimension")
        y = y + noise_cov.sample(rng_from(seed))
    return y
