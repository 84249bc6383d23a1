"""Space-filling initial designs on the unit box."""

from __future__ import annotations

import numpy as np


def latin_hypercube(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube sample of n points in [0, 1)^d.

    For every dimension, each of the n equal-width bins contains exactly one
    point; within-bin offsets are uniform and the bin permutations are drawn
    independently per dimension.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    X = np.empty((n, d))
    for j in range(d):
        perm = rng.permutation(n)
        X[:, j] = (perm + rng.random(n)) / n
    return X


def uniform(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. uniform points on [0, 1)^d."""
    if n < 0:
        raise ValueError(f"sample count must be nonnegative, got n={n}")
    return rng.random((n, d))


def default_n_init(d: int, n_features: int) -> int:
    """Default initial design size: 2d + 2, but always enough that the
    Jeffreys surrogate starts with at least two degrees of freedom."""
    return max(2 * d + 2, n_features + 2)
