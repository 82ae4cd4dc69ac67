"""Bootstrap particle filtering with three resampling backends.

* systematic: one uniform offset, N evenly spaced pointers.
* quantum: load sqrt(weight) amplitudes into a register and measure N shots;
  pre-measurement probabilities equal the weights exactly, so selection is
  multinomial(w) by construction.
* variational: fit a layered RY/CZ ansatz to the weight distribution by
  minimizing the KL divergence D(p_theta || w) with shift-rule gradients on
  the probability vector, then draw particle indices from the fitted state.

Weights live in log space during updates so large misfits cannot underflow
the ensemble into NaNs.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .dynamics import Covariance, DynamicsModel, ObservationOperator, propagate_batch
from .errors import ShapeError
from .fourdvar import AssimilationProblem
from .rngutil import rng_from, spawn_seeds
from .statevector import StateVector, apply_cz, apply_local_rotation, basis_state, probabilities, sample_indices

KL_FLOOR = 1e-12
WEIGHT_TOL = 1e-10


@dataclass
class ParticleEnsemble:
    particles: np.ndarray  # (N, d)
    weights: np.ndarray    # (N,)

    def __post_init__(self):
        self.particles = np.ascontiguousarray(self.particles, dtype=np.float64)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.particles.ndim != 2:
            raise ShapeError("particles must be a (N, d) array")
        if self.weights.shape != (self.particles.shape[0],):
            raise ShapeError("need exactly one weight per particle")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(self.weights.sum()) - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must sum to 1")

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    @property
    def dim(self) -> int:
        return self.particles.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    @classmethod
    def uniform(cls, particles: np.ndarray) -> "ParticleEnsemble":
        particles = np.asarray(particles, dtype=np.float64)
        n = particles.shape[0]
        return cls(particles, np.full(n, 1.0 / n))

    @classmethod
    def from_prior(
        cls, mean: np.ndarray, cov: Covariance, count: int, seed: int
    ) -> "ParticleEnsemble":
        draws = np.asarray(mean, float) + cov.sample(rng_from(seed), count)
        return cls.uniform(draws)


def predict(
    ensemble: ParticleEnsemble,
    model: DynamicsModel,
    process_noise: Covariance | None,
    seed: int,
    clip_bounds: tuple[np.ndarray, np.ndarray] | None = None,
) -> ParticleEnsemble:
    """Propagate every particle and add independent Gaussian model noise.

    Weights pass through unchanged.  Non-finite particles are clamped to
    clip_bounds when given (with a warning), otherwise they raise.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        moved = propagate_batch(model, ensemble.particles)
    if process_noise is not None:
        moved = moved + process_noise.sample(rng_from(seed), ensemble.size)
    bad = ~np.all(np.isfinite(moved), axis=1)
    if np.any(bad):
        if clip_bounds is None:
            raise ValueError("particle propagation produced non-finite states")
        warnings.warn(
            f"{int(bad.sum())} particles diverged; clamping to the encoding box",
            RuntimeWarning,
            stacklevel=2,
        )
        moved[bad] = np.nan_to_num(moved[bad], nan=0.0, posinf=0.0, neginf=0.0)
    if clip_bounds is not None:
        lower, upper = clip_bounds
        moved = np.clip(moved, lower, upper)
    return ParticleEnsemble(moved, ensemble.weights.copy())


def update_weights(
    ensemble: ParticleEnsemble,
    y: np.ndarray,
    obs_op: ObservationOperator,
    obs_cov: Covariance,
) -> ParticleEnsemble:
    """Multiply weights by the Gaussian likelihood of y, in log space."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (obs_op.obs_dim,):
        raise ShapeError("observation shape does not match the operator")
    with np.errstate(over="ignore", invalid="ignore"):
        residuals = y[None, :] - obs_op.apply_batch(ensemble.particles)
    finite = np.all(np.isfinite(residuals), axis=1)
    maha = np.full(ensemble.size, np.inf)
    if np.any(finite):
        r_ok = residuals[finite]
        maha[finite] = np.einsum("np,np->n", r_ok, obs_cov.solve(r_ok.T).T)
    log_w = np.log(np.maximum(ensemble.weights, 1e-300)) - 0.5 * maha
    log_w[~np.isfinite(log_w)] = -np.inf
    if not np.any(np.isfinite(log_w)):
        warnings.warn(
            "all particle likelihoods underflowed; resetting weights to uniform",
            RuntimeWarning,
            stacklevel=2,
        )
        return ParticleEnsemble(
            ensemble.particles.copy(), np.full(ensemble.size, 1.0 / ensemble.size)
        )
    log_w = log_w - logsumexp(log_w)
    w = np.exp(log_w)
    return ParticleEnsemble(ensemble.particles.copy(), w / w.sum())


def ess(ensemble: ParticleEnsemble) -> float:
    """Effective sample size 1 / sum(w^2), in [1, N]."""
    return float(1.0 / np.sum(ensemble.weights**2))


def resample_systematic(ensemble: ParticleEnsemble, seed: int) -> ParticleEnsemble:
    """Low-variance resampling with one uniform offset."""
    n = ensemble.size
    rng = rng_from(seed)
    pointers = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(ensemble.weights)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, pointers, side="right")
    return ParticleEnsemble.uniform(ensemble.particles[idx])


def weights_register(weights: np.ndarray) -> StateVector:
    """Register with amplitude sqrt(w_i) on index i, zero-padded to 2^q."""
    w = np.asarray(weights, dtype=np.float64)
    qubits = max(1, int(np.ceil(np.log2(w.size))))
    amps = np.zeros(1 << qubits, dtype=np.complex128)
    amps[: w.size] = np.sqrt(w)
    state = StateVector(qubits, amps)
    if float(np.max(np.abs(probabilities(state)[: w.size] - w))) > 1e-12:
        raise AssertionError("register probabilities deviate from the weights")
    return state


def resample_quantum(
    ensemble: ParticleEnsemble, shots: int, seed: int
) -> ParticleEnsemble:
    """Measure the weighted-superposition register `shots` times."""
    state = weights_register(ensemble.weights)
    idx = sample_indices(state, shots, seed)
    return ParticleEnsemble.uniform(ensemble.particles[idx])


@dataclass(frozen=True)
class QvrAnsatz:
    """Layered RY rotations with a CZ ring between layers, acting on |0...0>."""

    num_qubits: int
    layers: int
    thetas: np.ndarray

    def __post_init__(self):
        thetas = np.ascontiguousarray(self.thetas, dtype=np.float64)
        if thetas.shape != (self.layers * self.num_qubits,):
            raise ShapeError("need layers * num_qubits angles")
        object.__setattr__(self, "thetas", thetas)

    def state(self) -> StateVector:
        sv = basis_state(self.num_qubits, 0)
        angles = self.thetas.reshape(self.layers, self.num_qubits)
        for layer in range(self.layers):
            for q in range(self.num_qubits):
                sv = apply_local_rotation(sv, q, "Y", angles[layer, q])
            if layer < self.layers - 1 and self.num_qubits >= 2:
                pairs = (
                    [(0, 1)]
                    if self.num_qubits == 2
                    else [(q, (q + 1) % self.num_qubits) for q in range(self.num_qubits)]
                )
                for a, b in pairs:
                    sv = apply_cz(sv, a, b)
        return sv

    def probabilities(self) -> np.ndarray:
        return probabilities(self.state())


@dataclass
class QvrConfig:
    layers: int = 2
    max_iters: int = 300
    learning_rate: float = 0.5
    grad_tol: float = 1e-8
    threshold: float = 1e-3
    init_scale: float = 0.1
    kl_direction: str = "fit_first"  # D(p_theta || target); "target_first" reverses


@dataclass
class QvrFitResult:
    ansatz: QvrAnsatz
    divergence: float
    trace: np.ndarray
    converged: bool


def _padded_target(target_weights: np.ndarray, num_qubits: int) -> np.ndarray:
    padded = np.full(1 << num_qubits, KL_FLOOR)
    padded[: target_weights.size] = np.maximum(target_weights, KL_FLOOR)
    return padded / padded.sum()


def kl_divergence(p_model: np.ndarray, p_target: np.ndarray, direction: str) -> float:
    """KL between the ansatz distribution and the (floored) target."""
    if direction == "fit_first":
        mask = p_model > 0
        val = float(
            np.sum(p_model[mask] * (np.log(p_model[mask]) - np.log(p_target[mask])))
        )
    elif direction == "target_first":
        mask = p_target > 0
        val = float(
            np.sum(
                p_target[mask]
                * (np.log(p_target[mask]) - np.log(np.maximum(p_model[mask], KL_FLOOR)))
            )
        )
    else:
        raise ValueError(f"unknown KL direction {direction!r}")
    return max(val, 0.0)


def _kl_gradient(
    ansatz: QvrAnsatz, p_model: np.ndarray, p_target: np.ndarray, direction: str
) -> np.ndarray:
    """Shift-rule gradient: each RY angle is shifted by +-pi/2 in turn."""
    grad = np.empty(ansatz.thetas.size)
    if direction == "fit_first":
        dkl_dp = np.log(np.maximum(p_model, KL_FLOOR)) - np.log(p_target) + 1.0
    else:
        dkl_dp = -p_target / np.maximum(p_model, KL_FLOOR)
    for i in range(ansatz.thetas.size):
        shifted = ansatz.thetas.copy()
        shifted[i] += np.pi / 2
        p_plus = QvrAnsatz(ansatz.num_qubits, ansatz.layers, shifted).probabilities()
        shifted[i] -= np.pi
        p_minus = QvrAnsatz(ansatz.num_qubits, ansatz.layers, shifted).probabilities()
        grad[i] = float(dkl_dp @ (p_plus - p_minus) / 2.0)
    return grad


def qvr_fit(
    target_weights: np.ndarray, config: QvrConfig, seed: int
) -> QvrFitResult:
    """Fit the ansatz distribution to a normalized weight vector.

    Returns the best angles found; converged=False flags a fit that never
    dropped below config.threshold.
    """
    w = np.asarray(target_weights, dtype=np.float64)
    if abs(float(w.sum()) - 1.0) > WEIGHT_TOL:
        raise ValueError("target weights must be normalized")
    qubits = max(1, int(np.ceil(np.log2(w.size))))
    p_target = _padded_target(w, qubits)
    rng = rng_from(seed)
    thetas = rng.uniform(0.0, config.init_scale, size=config.layers * qubits)

    def build(vec):
        return QvrAnsatz(qubits, config.layers, vec)

    current = build(thetas)
    p_model = current.probabilities()
    div = kl_divergence(p_model, p_target, config.kl_direction)
    trace = [div]
    for _ in range(config.max_iters):
        grad = _kl_gradient(current, p_model, p_target, config.kl_direction)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < config.grad_tol:
            break
        step = config.learning_rate
        moved = False
        for _ in range(25):
            cand = build(current.thetas - step * grad)
            p_cand = cand.probabilities()
            d_cand = kl_divergence(p_cand, p_target, config.kl_direction)
            if d_cand <= div - 1e-4 * step * gnorm**2:
                current, p_model, div = cand, p_cand, d_cand
                moved = True
                break
            step *= 0.5
        if not moved:
            break
        trace.append(div)
    converged = div < config.threshold
    if not converged:
        warnings.warn(
            f"variational resampling fit stalled at divergence {div:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return QvrFitResult(current, div, np.asarray(trace), converged)


def resample_variational(
    ensemble: ParticleEnsemble, seed: int, config: QvrConfig | None = None
) -> tuple[ParticleEnsemble, QvrFitResult]:
    """Fit the ansatz to the weights, then draw particle indices from it."""
    config = config or QvrConfig()
    fit_seed, draw_seed = spawn_seeds(seed, 2)
    fit = qvr_fit(ensemble.weights, config, fit_seed)
    probs = fit.ansatz.probabilities()[: ensemble.size]
    probs = probs / probs.sum()
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    draws = rng_from(draw_seed).random(ensemble.size)
    idx = np.searchsorted(cum, draws, side="right")
    return ParticleEnsemble.uniform(ensemble.particles[idx]), fit


@dataclass
class PfDiagnostics:
    ess_trace: np.ndarray
    resampled: np.ndarray
    resample_count: int
    qvr_divergences: list[float] = field(default_factory=list)


def run_pf(
    problem: AssimilationProblem,
    n_particles: int,
    resampler: str = "systematic",
    threshold: float = 0.5,
    seed: int = 0,
    process_noise: Covariance | None = None,
    clip_bounds: tuple[np.ndarray, np.ndarray] | None = None,
    qvr_config: QvrConfig | None = None,
    init_particles: np.ndarray | None = None,
) -> tuple[np.ndarray, PfDiagnostics]:
    """Bootstrap filter across the window; analysis is the weighted mean.

    Resampling triggers when ESS < threshold * N.  Observations are pulled
    from the problem by time index; steps without one keep prior weights.
    The initial ensemble is drawn from the background prior unless
    init_particles supplies it directly.
    """
    if n_particles < 2:
        raise ValueError("need at least 2 particles")
    if resampler not in ("systematic", "quantum", "qvr"):
        raise ValueError(f"unknown resampler {resampler!r}")
    init_seed, *step_seeds = spawn_seeds(seed, 1 + 2 * problem.window)
    if init_particles is not None:
        ensemble = ParticleEnsemble.uniform(init_particles)
        if ensemble.size != n_particles:
            raise ShapeError("init_particles count != n_particles")
    else:
        ensemble = ParticleEnsemble.from_prior(
            problem.background, problem.background_cov, n_particles, init_seed
        )
    obs_at: dict[int, list[int]] = {}
    for i, (k, _) in enumerate(problem.observations):
        obs_at.setdefault(k, []).append(i)

    analysis = np.empty((problem.window, problem.state_dim))
    ess_trace = np.empty(problem.window)
    resampled = np.zeros(problem.window, dtype=bool)
    qvr_divs: list[float] = []
    count = 0
    for k in range(problem.window):
        if k > 0:
            ensemble = predict(
                ensemble,
                problem.model,
                process_noise,
                step_seeds[2 * k],
                clip_bounds=clip_bounds,
            )
        for i in obs_at.get(k, []):
            _, y = problem.observations[i]
            ensemble = update_weights(
                ensemble, y, problem.obs_ops[i], problem.obs_covs[i]
            )
        ess_trace[k] = ess(ensemble)
        analysis[k] = ensemble.mean()
        if ess_trace[k] < threshold * n_particles:
            r_seed = step_seeds[2 * k + 1]
            if resampler == "systematic":
                ensemble = resample_systematic(ensemble, r_seed)
            elif resampler == "quantum":
                ensemble = resample_quantum(ensemble, n_particles, r_seed)
            else:
                ensemble, fit = resample_variational(ensemble, r_seed, qvr_config)
                qvr_divs.append(fit.divergence)
            resampled[k] = True
            count += 1
    return analysis, PfDiagnostics(ess_trace, resampled, count, qvr_divs)
