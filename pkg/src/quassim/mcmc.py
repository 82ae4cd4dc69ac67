"""Metropolis-Hastings over a discretized posterior, plus a Grover-amplified
step that batches one fixed-u accept/reject over the whole proposal support.

The amplified step draws a single uniform u, marks every support state whose
acceptance ratio exceeds u, Grover-amplifies the marked set inside a uniform
superposition over the support, and measures once.  Its move distribution is
uniform over the marked set rather than proportional to the acceptance
ratio, so the raw chain is generally not reversible; ``corrected=True``
wraps each realized move in an outer accept/reject against the exact
u-integrated proposal density, making the target stationary again.

Everything is log-space to survive large assimilation costs, and every
transition kernel can be enumerated exactly for targets of up to 256 states.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import CapacityError, ShapeError
from .rngutil import rng_from
from .statevector import StateVector, amplitude_amplify, sample_indices

U_GRID_POINTS = 10_000
MAX_ENUM_STATES = 256


@dataclass(frozen=True)
class TargetDistribution:
    """Unnormalized log posterior over the 2**n basis indices."""

    log_weights: np.ndarray
    normalizer: float = field(init=False)

    def __post_init__(self):
        lw = np.ascontiguousarray(self.log_weights, dtype=np.float64)
        if lw.ndim != 1 or lw.size < 2:
            raise ShapeError("log_weights must be a 1-d array with >= 2 entries")
        n = lw.size.bit_length() - 1
        if lw.size != 1 << n:
            raise ShapeError("number of states must be a power of two")
        if not np.all(np.isfinite(lw)):
            raise ValueError("log_weights must be finite (use large negatives, not -inf)")
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "normalizer", float(logsumexp(lw)))

    @property
    def dim(self) -> int:
        return self.log_weights.size

    @property
    def num_qubits(self) -> int:
        return self.dim.bit_length() - 1

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights - self.normalizer)

    @classmethod
    def from_cost_table(cls, values: np.ndarray) -> "TargetDistribution":
        """Boltzmann weights of a cost table: log p proportional to -cost."""
        return cls(log_weights=-np.asarray(values, dtype=np.float64))


@lru_cache(maxsize=32)
def _flip_masks(num_qubits: int, flip_count: int) -> np.ndarray:
    masks = []
    for r in range(1, flip_count + 1):
        for bits in itertools.combinations(range(num_qubits), r):
            m = 0
            for b in bits:
                m |= 1 << b
            masks.append(m)
    return np.asarray(masks, dtype=np.int64)


@dataclass(frozen=True)
class ProposalKernel:
    """Symmetric proposal: uniform over all other states, or over the
    Hamming ball of radius flip_count around the current state."""

    kind: str
    flip_count: int = 1

    def __post_init__(self):
        if self.kind not in ("uniform_global", "bitflip_neighborhood"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "bitflip_neighborhood" and self.flip_count < 1:
            raise ValueError("flip_count must be >= 1")

    def support(self, current: int, num_qubits: int) -> np.ndarray:
        dim = 1 << num_qubits
        if self.kind == "uniform_global":
            idx = np.arange(dim, dtype=np.int64)
            return idx[idx != current]
        if self.flip_count > num_qubits:
            raise ValueError("flip_count exceeds the register size")
        return current ^ _flip_masks(num_qubits, self.flip_count)

    def sample(self, current: int, num_qubits: int, rng: np.random.Generator) -> int:
        if self.kind == "uniform_global":
            j = int(rng.integers((1 << num_qubits) - 1))
            return j + 1 if j >= current else j
        masks = _flip_masks(num_qubits, self.flip_count)
        return int(current ^ masks[rng.integers(masks.size)])


@dataclass
class ChainRun:
    """A realized chain plus its bookkeeping; states are post-burn-in."""

    states: np.ndarray
    accepted: int
    proposals: int
    oracle_calls: int
    seed: int
    step_accepted: np.ndarray | None = None
    step_oracle_calls: np.ndarray | None = None

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=np.int64)
        if self.states.size == 0:
            raise ValueError("chain must retain at least one state")
        if self.accepted > self.proposals:
            raise ValueError("accepted cannot exceed proposals")

    def to_csv(self, path) -> None:
        acc = self.step_accepted
        calls = self.step_oracle_calls
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "state_index", "accepted", "oracle_calls"])
            for i, s in enumerate(self.states):
                writer.writerow(
                    [
                        i,
                        int(s),
                        int(acc[i]) if acc is not None else "",
                        int(calls[i]) if calls is not None else "",
                    ]
                )


def _log_alpha(target: TargetDistribution, i: int, j: int) -> float:
    return min(0.0, float(target.log_weights[j] - target.log_weights[i]))


def _mh_step_rng(
    target: TargetDistribution,
    kernel: ProposalKernel,
    current: int,
    rng: np.random.Generator,
) -> tuple[int, bool]:
    proposal = kernel.sample(current, target.num_qubits, rng)
    la = _log_alpha(target, current, proposal)
    if la >= 0.0 or np.log(max(rng.random(), 1e-300)) < la:
        return proposal, True
    return current, False


def mh_step(
    target: TargetDistribution,
    kernel: ProposalKernel,
    current: int,
    seed: int | np.random.Generator,
) -> tuple[int, bool]:
    """One Metropolis-Hastings step; symmetric kernel, min(1, p'/p) acceptance."""
    if not 0 <= current < target.dim:
        raise ValueError("current state out of range")
    return _mh_step_rng(target, kernel, current, rng_from(seed))


def _acceptance_ratios(
    target: TargetDistribution, current: int, support: np.ndarray
) -> np.ndarray:
    return np.exp(
        np.minimum(0.0, target.log_weights[support] - target.log_weights[current])
    )


def grover_iterations(epsilon: float) -> int:
    """Iteration count floor(pi / (4 sqrt(eps))) used by the amplified step."""
    return int(np.floor(np.pi / (4.0 * np.sqrt(epsilon))))


def grover_success_probability(epsilon: float, iterations: int) -> float:
    theta = np.arcsin(np.sqrt(epsilon))
    return float(np.sin((2 * iterations + 1) * theta) ** 2)


def _qmcmc_step_rng(
    target: TargetDistribution,
    kernel: ProposalKernel,
    current: int,
    rng: np.random.Generator,
    corrected: bool = False,
    epsilon_shots: int | None = None,
) -> tuple[int, bool, int]:
    n = target.num_qubits
    support = kernel.support(current, n)
    alpha = _acceptance_ratios(target, current, support)
    u = rng.random()
    marked_local = alpha > u
    m = int(np.count_nonzero(marked_local))
    if m == 0:
        return current, False, 1

    amps = np.zeros(target.dim, dtype=np.complex128)
    amps[support] = 1.0 / np.sqrt(support.size)
    state = StateVector(n, amps)
    mask = np.zeros(target.dim, dtype=bool)
    mask[support[marked_local]] = True

    if epsilon_shots is None:
        eps = m / support.size
    else:
        hits = int(np.count_nonzero(mask[sample_indices(state, epsilon_shots, rng)]))
        if hits == 0:
            return current, False, 1
        eps = hits / epsilon_shots
    k = grover_iterations(eps)
    amplified = amplitude_amplify(state, mask, k)
    outcome = int(sample_indices(amplified, 1, rng)[0])
    oracle_calls = k + 1
    if not mask[outcome]:
        return current, False, oracle_calls

    if corrected:
        fwd_support, fwd_move, _ = effective_proposal_row(target, kernel, current)
        rev_support, rev_move, _ = effective_proposal_row(target, kernel, outcome)
        q_fwd = float(fwd_move[np.nonzero(fwd_support == outcome)[0][0]])
        rev_idx = np.nonzero(rev_support == current)[0]
        q_rev = float(rev_move[rev_idx[0]]) if rev_idx.size else 0.0
        lw = target.log_weights
        if q_rev <= 0.0:
            return current, False, oracle_calls
        log_ratio = (lw[outcome] + np.log(q_rev)) - (lw[current] + np.log(q_fwd))
        if log_ratio >= 0.0 or np.log(max(rng.random(), 1e-300)) < log_ratio:
            return outcome, True, oracle_calls
        return current, False, oracle_calls
    return outcome, True, oracle_calls


def qmcmc_step(
    target: TargetDistribution,
    kernel: ProposalKernel,
    current: int,
    seed: int | np.random.Generator,
    corrected: bool = False,
    epsilon_shots: int | None = None,
) -> tuple[int, bool, int]:
    """One amplified fixed-u step; returns (next, accepted, oracle_calls).

    The marked fraction is read exactly from the state unless epsilon_shots
    asks for a shot-based estimate.
    """
    if not 0 <= current < target.dim:
        raise ValueError("current state out of range")
    return _qmcmc_step_rng(
        target, kernel, current, rng_from(seed), corrected, epsilon_shots
    )


def classical_rejection_step(
    target: TargetDistribution,
    kernel: ProposalKernel,
    current: int,
    seed: int | np.random.Generator,
    max_draws: int = 10_000_000,
) -> tuple[int, bool, int]:
    """Fixed-u rejection sampling baseline: propose until the ratio beats u."""
    rng = rng_from(seed)
    u = rng.random()
    n = target.num_qubits
    lw = target.log_weights
    draws = 0
    while draws < max_draws:
        j = kernel.sample(current, n, rng)
        draws += 1
        if np.exp(min(0.0, lw[j] - lw[current])) > u:
            return j, True, draws
    return current, False, draws


def run_chain(
    target: TargetDistribution,
    kernel: ProposalKernel,
    steps: int,
    burn_in: int,
    seed: int,
    init: int | None = None,
    step_kind: str = "classical",
    corrected: bool = False,
    epsilon_shots: int | None = None,
) -> ChainRun:
    """Iterate a step kernel and keep the post-burn-in trajectory."""
    if not steps > burn_in >= 0:
        raise ValueError("need steps > burn_in >= 0")
    if step_kind not in ("classical", "quantum"):
        raise ValueError(f"unknown step kind {step_kind!r}")
    rng = rng_from(seed)
    current = int(rng.integers(target.dim)) if init is None else int(init)
    states = np.empty(steps, dtype=np.int64)
    flags = np.empty(steps, dtype=bool)
    calls = np.empty(steps, dtype=np.int64)
    accepted = 0
    total_calls = 0
    for t in range(steps):
        if step_kind == "classical":
            current, acc = _mh_step_rng(target, kernel, current, rng)
            n_calls = 1
        else:
            current, acc, n_calls = _qmcmc_step_rng(
                target, kernel, current, rng, corrected, epsilon_shots
            )
        states[t] = current
        flags[t] = acc
        calls[t] = n_calls
        accepted += int(acc)
        total_calls += n_calls
    return ChainRun(
        states=states[burn_in:],
        accepted=accepted,
        proposals=steps,
        oracle_calls=total_calls,
        seed=int(seed),
        step_accepted=flags[burn_in:],
        step_oracle_calls=calls[burn_in:],
    )


def effective_proposal_row(
    target: TargetDistribution, kernel: ProposalKernel, current: int
) -> tuple[np.ndarray, np.ndarray, float]:
    """Exact u-integrated move distribution of the raw amplified step.

    Returns (support, per-support move probability, stay probability); the
    integral over u is done segment-by-segment between the distinct
    acceptance ratios, where the marked set is constant.
    """
    n = target.num_qubits
    support = kernel.support(current, n)
    alpha = _acceptance_ratios(target, current, support)
    size = support.size
    sorted_alpha = np.sort(alpha)
    uniq = np.unique(alpha)
    positive = uniq[uniq > 0.0]
    move = np.zeros(size)
    stay = 0.0
    if positive.size == 0:
        return support, move, 1.0
    bounds = np.concatenate([[0.0], positive])
    cum_contrib = np.zeros(positive.size)
    for s, thr in enumerate(positive):
        seg = bounds[s + 1] - bounds[s]
        m = size - int(np.searchsorted(sorted_alpha, thr, side="left"))
        eps = m / size
        p_succ = grover_success_probability(eps, grover_iterations(eps))
        cum_contrib[s] = seg * p_succ / m
        stay += seg * (1.0 - p_succ)
    stay += 1.0 - positive[-1]
    csum = np.cumsum(cum_contrib)
    pos_idx = np.searchsorted(positive, alpha, side="right") - 1
    has_mass = pos_idx >= 0
    move[has_mass] = csum[pos_idx[has_mass]]
    return support, move, float(stay)


def transition_matrix(
    step_kind: str,
    target: TargetDistribution,
    kernel: ProposalKernel,
    u_grid: int = U_GRID_POINTS,
) -> np.ndarray:
    """Exact transition probabilities by enumeration (<= 256 states).

    classical: closed form.  quantum: the raw amplified step integrated over
    u on a u_grid-point midpoint grid using exact amplification success
    probabilities.  quantum_corrected: the piecewise-exact amplified kernel
    with the outer accept/reject applied.
    """
    dim = target.dim
    if dim > MAX_ENUM_STATES:
        raise CapacityError(f"enumeration capped at {MAX_ENUM_STATES} states")
    n = target.num_qubits
    matrix = np.zeros((dim, dim))
    if step_kind == "classical":
        for i in range(dim):
            support = kernel.support(i, n)
            alpha = _acceptance_ratios(target, i, support)
            q = 1.0 / support.size
            matrix[i, support] = q * alpha
            matrix[i, i] += 1.0 - float(np.sum(q * alpha))
        return matrix
    if step_kind == "quantum":
        u = (np.arange(u_grid) + 0.5) / u_grid
        for i in range(dim):
            support = kernel.support(i, n)
            alpha = _acceptance_ratios(target, i, support)
            size = support.size
            sorted_alpha = np.sort(alpha)
            m_of_u = size - np.searchsorted(sorted_alpha, u, side="right")
            nonzero = m_of_u > 0
            eps = m_of_u[nonzero] / size
            iters = np.floor(np.pi / (4.0 * np.sqrt(eps)))
            theta = np.arcsin(np.sqrt(eps))
            p_succ = np.sin((2 * iters + 1) * theta) ** 2
            contrib = np.zeros(u_grid)
            contrib[nonzero] = p_succ / m_of_u[nonzero]
            csum = np.concatenate([[0.0], np.cumsum(contrib)])
            cnt = np.searchsorted(u, alpha, side="left")
            matrix[i, support] = csum[cnt] / u_grid
            stay = (np.count_nonzero(~nonzero) + float(np.sum(1.0 - p_succ))) / u_grid
            matrix[i, i] += stay
        return matrix
    if step_kind == "quantum_corrected":
        probs = target.probabilities()
        rows = [effective_proposal_row(target, kernel, i) for i in range(dim)]
        q_eff = np.zeros((dim, dim))
        for i, (support, move, _) in enumerate(rows):
            q_eff[i, support] = move
        for i in range(dim):
            for j in rows[i][0]:
                if q_eff[i, j] <= 0.0:
                    continue
                ratio = (probs[j] * q_eff[j, i]) / (probs[i] * q_eff[i, j])
                matrix[i, j] = q_eff[i, j] * min(1.0, ratio)
            matrix[i, i] += 1.0 - float(np.sum(matrix[i]))
        return matrix
    raise ValueError(f"unknown step kind {step_kind!r}")


def check_detailed_balance(matrix: np.ndarray, target: TargetDistribution) -> float:
    """Max over (i, j) of |p_i P(i->j) - p_j P(j->i)|."""
    p = target.probabilities()
    if matrix.shape != (p.size, p.size):
        raise ShapeError("matrix shape does not match the target")
    flow = p[:, None] * matrix
    return float(np.max(np.abs(flow - flow.T)))


def stationary_distribution(matrix: np.ndarray) -> np.ndarray:
    """Leading left eigenvector of a stochastic matrix, normalized."""
    vals, vecs = np.linalg.eig(matrix.T)
    lead = np.argmin(np.abs(vals - 1.0))
    pi = np.real(vecs[:, lead])
    pi = np.abs(pi)
    return pi / pi.sum()


def is_irreducible(matrix: np.ndarray, tol: float = 0.0) -> bool:
    """Reachability check: one strongly connected class of positive moves."""
    from scipy.sparse.csgraph import connected_components

    adjacency = (matrix > tol).astype(np.int8)
    n_comp, _ = connected_components(adjacency, directed=True, connection="strong")
    return n_comp == 1


class ChainDiagnostics(NamedTuple):
    ess: float
    autocorrelation_time: float
    acceptance_rate: float


def diagnostics(run: ChainRun, max_lag: int = 10_000) -> ChainDiagnostics:
    """ESS and autocorrelation time of the retained state-index sequence.

    The autocorrelation sum truncates at the first non-positive estimate; a
    constant chain reports tau = chain length and ESS = 1.
    """
    x = run.states.astype(np.float64)
    length = x.size
    if length < 10:
        raise ValueError("need at least 10 retained states")
    rate = run.accepted / run.proposals if run.proposals > 0 else 0.0
    centered = x - x.mean()
    var = float(np.mean(centered**2))
    if var <= 0.0:
        return ChainDiagnostics(1.0, float(length), rate)
    tau = 1.0
    for k in range(1, min(length - 1, max_lag) + 1):
        rho = float(np.mean(centered[:-k] * centered[k:])) / var
        if rho <= 0.0:
            break
        tau += 2.0 * rho
    ess = min(float(length), max(1.0, length / tau))
    return ChainDiagnostics(ess, tau, rate)
