"""Dense statevector simulation of an n-qubit register.

Amplitudes are one flat array of 2**n complex doubles; qubit 0 is the
least-significant bit of the basis index.  Every operation is pure
(state in, new state out) and unitary except measurement sampling, which
reads but never mutates the state.  Measurement uses inverse-CDF sampling
over the cumulative probability array driven by a counter-based Philox
generator, so identical (state, shots, seed) give bit-identical records.
Global phase is never normalized away; only probability-level quantities
are contractual.

The register is capped at 24 qubits (256 MiB of amplitudes).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import CapacityError, ShapeError
from .rngutil import rng_from

MAX_QUBITS = 24

MarkedSpec = Callable[[int], bool] | np.ndarray | Iterable[int]


@dataclass(frozen=True)
class StateVector:
    """An n-qubit register as 2**n complex amplitudes, qubit 0 = LSB."""

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise CapacityError(
                f"num_qubits must be in [1, {MAX_QUBITS}], got {self.num_qubits}"
            )
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.num_qubits,):
            raise ShapeError(
                f"expected {1 << self.num_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


@dataclass(frozen=True)
class DiagonalObservable:
    """Diagonal operator: one real value per computational-basis index."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ShapeError("observable values must be a non-empty 1-d array")
        if not np.all(np.isfinite(vals)):
            raise ValueError("observable values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class MeasurementRecord:
    """Outcome histogram of repeated measurements in the computational basis."""

    shots: int
    counts: dict[int, int]
    seed: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts must sum to shots")


def _check_dims(state: StateVector, observable: DiagonalObservable) -> None:
    if observable.dim != state.dim:
        raise ShapeError(
            f"observable dimension {observable.dim} != state dimension {state.dim}"
        )


def marked_mask(marked: MarkedSpec, dim: int) -> np.ndarray:
    """Normalize a predicate / index collection / boolean array to a mask."""
    if callable(marked):
        return np.fromiter((bool(marked(k)) for k in range(dim)), dtype=bool, count=dim)
    arr = np.asarray(marked)
    if arr.dtype == bool:
        if arr.shape != (dim,):
            raise ShapeError(f"boolean mask must have shape ({dim},)")
        return arr
    mask = np.zeros(dim, dtype=bool)
    idx = arr.astype(np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= dim):
        raise ValueError("marked index out of range")
    mask[idx] = True
    return mask


def init_uniform(num_qubits: int) -> StateVector:
    """Uniform superposition: every amplitude 2**(-n/2), phase 0."""
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise CapacityError(
            f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}"
        )
    dim = 1 << num_qubits
    amps = np.full(dim, 1.0 / np.sqrt(dim), dtype=np.complex128)
    return StateVector(num_qubits, amps)


def basis_state(num_qubits: int, index: int) -> StateVector:
    """Computational-basis state |index>."""
    dim = 1 << num_qubits
    if not 0 <= index < dim:
        raise ValueError(f"basis index {index} out of range for {num_qubits} qubits")
    amps = np.zeros(dim, dtype=np.complex128)
    amps[index] = 1.0
    return StateVector(num_qubits, amps)


def apply_diagonal_phase(
    state: StateVector, observable: DiagonalObservable, gamma: float
) -> StateVector:
    """Multiply amplitude k by exp(-i * gamma * values[k])."""
    _check_dims(state, observable)
    amps = state.amplitudes * np.exp(-1j * gamma * observable.values)
    return StateVector(state.num_qubits, amps)


def _apply_single_qubit(amps: np.ndarray, matrix: np.ndarray, qubit: int) -> np.ndarray:
    # Qubit q occupies the middle axis of a (high, 2, 2**q) view.
    block = 1 << qubit
    view = amps.reshape(-1, 2, block)
    a0 = view[:, 0, :]
    a1 = view[:, 1, :]
    out = np.empty_like(view)
    out[:, 0, :] = matrix[0, 0] * a0 + matrix[0, 1] * a1
    out[:, 1, :] = matrix[1, 0] * a0 + matrix[1, 1] * a1
    return out.reshape(-1)


def apply_mixer(state: StateVector, beta: float) -> StateVector:
    """Apply exp(-i*beta*X) to every qubit (transverse-field mixing layer)."""
    c, s = np.cos(beta), np.sin(beta)
    kernel = np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    amps = state.amplitudes
    for q in range(state.num_qubits):
        amps = _apply_single_qubit(amps, kernel, q)
    return StateVector(state.num_qubits, amps)


_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def apply_local_rotation(
    state: StateVector, qubit: int, axis: str, angle: float
) -> StateVector:
    """Apply exp(-i*angle/2 * sigma_axis) to one qubit (standard convention)."""
    if not 0 <= qubit < state.num_qubits:
        raise ValueError(f"qubit {qubit} out of range for {state.num_qubits}-qubit state")
    if axis not in _PAULI:
        raise ValueError(f"axis must be one of X, Y, Z, got {axis!r}")
    half = angle / 2.0
    kernel = np.cos(half) * np.eye(2) - 1j * np.sin(half) * _PAULI[axis]
    amps = _apply_single_qubit(state.amplitudes, kernel, qubit)
    return StateVector(state.num_qubits, amps)


def apply_cz(state: StateVector, qubit_a: int, qubit_b: int) -> StateVector:
    """Negate amplitudes of basis states where both qubits are 1."""
    n = state.num_qubits
    if qubit_a == qubit_b:
        raise ValueError("controlled-Z requires two distinct qubits")
    for q in (qubit_a, qubit_b):
        if not 0 <= q < n:
            raise ValueError(f"qubit {q} out of range for {n}-qubit state")
    idx = np.arange(state.dim)
    both = ((idx >> qubit_a) & 1).astype(bool) & ((idx >> qubit_b) & 1).astype(bool)
    amps = state.amplitudes.copy()
    amps[both] = -amps[both]
    return StateVector(n, amps)


def oracle_phase_flip(state: StateVector, marked: MarkedSpec) -> StateVector:
    """Negate the amplitude of every marked basis state."""
    mask = marked_mask(marked, state.dim)
    amps = state.amplitudes.copy()
    amps[mask] = -amps[mask]
    return StateVector(state.num_qubits, amps)


def grover_reflection(state: StateVector, reference: StateVector) -> StateVector:
    """Reflect about the reference: 2 <ref|state> |ref> - |state>."""
    if reference.dim != state.dim:
        raise ShapeError("reference and state dimensions differ")
    overlap = np.vdot(reference.amplitudes, state.amplitudes)
    amps = 2.0 * overlap * reference.amplitudes - state.amplitudes
    return StateVector(state.num_qubits, amps)


def amplitude_amplify(
    state: StateVector, marked: MarkedSpec, iterations: int
) -> StateVector:
    """Iterate (reflection about the input state) o (marked-phase oracle).

    After k iterations the marked-subspace probability equals
    sin^2((2k+1) * arcsin(sqrt(initial marked mass))), exactly.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    mask = marked_mask(marked, state.dim)
    reference = state
    out = state
    for _ in range(iterations):
        out = grover_reflection(oracle_phase_flip(out, mask), reference)
    return out


def probabilities(state: StateVector) -> np.ndarray:
    """Born probabilities |amplitude|^2 per basis index."""
    return np.abs(state.amplitudes) ** 2


def measure(state: StateVector, shots: int, seed: int) -> MeasurementRecord:
    """Draw i.i.d. basis-state outcomes; deterministic given the seed."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    cdf = np.cumsum(probabilities(state))
    cdf[-1] = 1.0  # absorb float drift so every u in [0,1) lands in range
    rng = rng_from(seed)
    draws = np.searchsorted(cdf, rng.random(shots), side="right")
    counts = np.bincount(draws, minlength=state.dim)
    return MeasurementRecord(
        shots=shots,
        counts={int(k): int(c) for k, c in enumerate(counts) if c},
        seed=int(seed) if not isinstance(seed, np.random.Generator) else -1,
    )


def sample_indices(state: StateVector, count: int, seed: int) -> np.ndarray:
    """Like measure() but returns the raw outcome sequence, in draw order."""
    if count < 1:
        raise ValueError("count must be >= 1")
    cdf = np.cumsum(probabilities(state))
    cdf[-1] = 1.0
    rng = rng_from(seed)
    return np.searchsorted(cdf, rng.random(count), side="right")


def expectation_diagonal(state: StateVector, observable: DiagonalObservable) -> float:
    """Sum_k |amplitude_k|^2 * values[k]."""
    _check_dims(state, observable)
    return float(probabilities(state) @ observable.values)


def dump_amplitudes_csv(state: StateVector, path) -> None:
    """Debug dump: one row (index, re, im) per basis state."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "re", "im"])
        for k, a in enumerate(state.amplitudes):
            writer.writerow([k, repr(float(a.real)), repr(float(a.imag))])
