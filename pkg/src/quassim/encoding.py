"""Bijective discretization between continuous state vectors and basis indices.

Each of the d state dimensions gets m qubits and a uniform grid of 2**m
points spanning [lower, upper] inclusive.  Per-dimension cell indices are
packed dimension-major: dimension 0 occupies the least-significant bits.
Out-of-range inputs clamp to the box rather than erroring, so transiently
escaping dynamics cannot kill a pipeline run.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ShapeError
from .statevector import MAX_QUBITS, DiagonalObservable


@dataclass(frozen=True, eq=False)
class EncodingScheme:
    dims: int
    bits_per_dim: int
    lower: np.ndarray
    upper: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, EncodingScheme):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.bits_per_dim == other.bits_per_dim
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __hash__(self):
        return hash((self.dims, self.bits_per_dim, bytes(self.lower), bytes(self.upper)))

    def __post_init__(self):
        lower = np.ascontiguousarray(self.lower, dtype=np.float64)
        upper = np.ascontiguousarray(self.upper, dtype=np.float64)
        if self.dims < 1 or self.bits_per_dim < 1:
            raise ValueError("dims and bits_per_dim must be >= 1")
        if lower.shape != (self.dims,) or upper.shape != (self.dims,):
            raise ShapeError("lower/upper must have shape (dims,)")
        if not np.all(upper > lower):
            raise ValueError("upper must exceed lower in every dimension")
        if self.num_qubits > MAX_QUBITS:
            raise CapacityError(
                f"{self.dims}*{self.bits_per_dim} qubits exceed the {MAX_QUBITS}-qubit cap"
            )
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def num_qubits(self) -> int:
        return self.dims * self.bits_per_dim

    @property
    def num_states(self) -> int:
        return 1 << self.num_qubits

    @property
    def levels(self) -> int:
        return 1 << self.bits_per_dim

    @property
    def cell_widths(self) -> np.ndarray:
        return (self.upper - self.lower) / (self.levels - 1)

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "bits_per_dim": self.bits_per_dim,
            "lower": [float(v) for v in self.lower],
            "upper": [float(v) for v in self.upper],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingScheme":
        return cls(
            dims=int(d["dims"]),
            bits_per_dim=int(d["bits_per_dim"]),
            lower=np.asarray(d["lower"], dtype=float),
            upper=np.asarray(d["upper"], dtype=float),
        )


def cells_of(x: np.ndarray, scheme: EncodingScheme) -> np.ndarray:
    """Per-dimension grid cell of x: clamp, then round half-down to nearest."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != scheme.dims:
        raise ShapeError(f"state has {x.shape[-1]} dims, scheme expects {scheme.dims}")
    clamped = np.clip(x, scheme.lower, scheme.upper)
    t = (clamped - scheme.lower) / scheme.cell_widths
    cells = np.ceil(t - 0.5).astype(np.int64)  # ties at .5 go to the lower cell
    return np.clip(cells, 0, scheme.levels - 1)


def encode(x: np.ndarray, scheme: EncodingScheme) -> int:
    """Quantize a continuous state to its basis index."""
    cells = cells_of(np.asarray(x, dtype=np.float64).reshape(-1), scheme)
    shifts = scheme.bits_per_dim * np.arange(scheme.dims, dtype=np.int64)
    return int(np.sum(cells << shifts))


def decode(index: int, scheme: EncodingScheme) -> np.ndarray:
    """Map a basis index back to the grid point it names."""
    if not 0 <= index < scheme.num_states:
        raise ValueError(f"index {index} out of range [0, {scheme.num_states})")
    return decode_batch(np.asarray([index]), scheme)[0]


def decode_batch(indices: np.ndarray, scheme: EncodingScheme) -> np.ndarray:
    """Vectorized decode: (K,) indices -> (K, dims) grid points."""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1, 1)
    shifts = scheme.bits_per_dim * np.arange(scheme.dims, dtype=np.int64)
    cells = (idx >> shifts) & (scheme.levels - 1)
    return scheme.lower + cells * scheme.cell_widths


def encode_batch(x: np.ndarray, scheme: EncodingScheme) -> np.ndarray:
    """Vectorized encode: (K, dims) states -> (K,) indices."""
    cells = cells_of(np.asarray(x, dtype=np.float64), scheme)
    shifts = scheme.bits_per_dim * np.arange(scheme.dims, dtype=np.int64)
    return np.sum(cells << shifts, axis=-1)


def tabulate_cost(scheme, cost, batched: bool = False) -> DiagonalObservable:
    """Evaluate a cost function on every grid point of the scheme.

    With batched=True the callable receives one (num_states, dims) array and
    must return (num_states,) values; otherwise it is called per point.
    """
    if scheme.num_qubits > MAX_QUBITS:
        raise CapacityError("encoding exceeds simulator capacity")
    points = decode_batch(np.arange(scheme.num_states), scheme)
    if batched:
        values = np.asarray(cost(points), dtype=np.float64)
    else:
        values = np.fromiter(
            (float(cost(p)) for p in points), dtype=np.float64, count=scheme.num_states
        )
    return DiagonalObservable(values)
