"""Replayable random streams.

Every random draw in the package goes through :func:`rng`, which builds a
PCG64 generator from a master seed plus an optional path of integers (trial
index, sigma index, ...).  Distinct paths give independent streams.
"""

import numpy as np


def rng(seed, *path: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("a seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def subseed(seed, *path: int) -> int:
    """Integer seed for a child stream, for APIs that take a plain seed."""
    if seed is None:
        raise ValueError("a seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])
