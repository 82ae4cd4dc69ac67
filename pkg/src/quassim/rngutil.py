"""Seeded RNG construction.

All randomness in the package flows through counter-based Philox generators
so that identical seeds give bit-identical results regardless of how many
other streams were created in between, and parallel fan-out can derive
independent child streams deterministically.
"""
from __future__ import annotations

import numpy as np


def rng_from(seed: int | np.random.Generator) -> np.random.Generator:
    """Return a Philox generator for ``seed``, or pass a generator through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spawn_seeds(seed: int, count: int) -> list[int]:
    """Derive ``count`` independent child seeds from ``seed``."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]
