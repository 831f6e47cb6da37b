"""Seeded random primitives used by fold splitting and data simulation.

Everything random in this package flows through a counter-based Philox
generator keyed by explicit integer entropy, so results are reproducible
across platforms, processes, and thread counts.
"""

from __future__ import annotations

import numpy as np


def make_generator(*entropy: int) -> np.random.Generator:
    """Return a Philox generator keyed by one or more non-negative ints."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(entropy))))


def child_seeds(count: int, *entropy: int) -> list[int]:
    """Derive `count` independent 64-bit seeds from the given entropy."""
    state = np.random.SeedSequence(list(entropy)).generate_state(count, np.uint64)
    return [int(s) for s in state]


def standard_normal(gen: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
    """Draw N(0,1) variates via the Box-Muller transform.

    Uses the generator only through its uniform stream, which keeps the
    draws identical for any numpy build with the same bit generator.
    """
    shape = (size,) if isinstance(size, int) else tuple(size)
    n = int(np.prod(shape)) if shape else 1
    m = (n + 1) // 2
    u1 = gen.random(m)
    u2 = gen.random(m)
    # 1 - u1 lies in (0, 1], so the log is finite
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
    return z.reshape(shape)


def shuffled_indices(n: int, gen: np.random.Generator) -> np.ndarray:
    """Uniformly shuffled 0..n-1 (Fisher-Yates, executed by the generator)."""
    return gen.permutation(n)
