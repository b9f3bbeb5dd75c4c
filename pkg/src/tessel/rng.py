"""Seeded random streams.

Every random draw in the package comes from a Philox (counter-based) generator
keyed by a single 64-bit seed plus a tuple of integers naming the consumer, so
independent grid cells get independent, reproducible streams regardless of
execution order.
"""

import os

import numpy as np

# stream identifiers, so that call sites never collide by accident
LHS = 1
FIRST_POINT = 2
MC_SAMPLE = 3
RCV = 4
DATASET = 5
SPLIT = 6


def make_rng(seed, *keys):
    """Return a ``numpy.random.Generator`` for ``(seed, *keys)``."""
    if seed is None:
        seed = 0
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def n_threads():
    """Worker count for internal thread pools, capped by ``TESSEL_THREADS``."""
    raw = os.environ.get("TESSEL_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)
