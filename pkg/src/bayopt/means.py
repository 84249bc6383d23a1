"""Parametric mean feature functions for the trend part of the surrogate.

Grammar: mZero, mConst, mLinear, mLinearConst, mRadial(k) with k the
number of Gaussian bumps.  Radial centers are fixed at bind time on a
Latin hypercube grid (deterministically seeded per (k, d)) so the trend
stays linear in its weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ParseError
from .initdesign import latin_hypercube

_NAMES = ("mZero", "mConst", "mLinear", "mLinearConst", "mRadial")

# Internal seed for radial center placement; fixed so MeanSpec is reproducible.
_RADIAL_SEED = 20809


@dataclass(frozen=True)
class MeanSpec:
    """Parsed mean feature function with its feature count m."""

    name: str
    n_centers: int = 0
    centers: tuple = ()  # mRadial only, tuple of point tuples, bound with bind()

    def n_features(self, dim: int) -> int:
        if self.name == "mZero":
            return 0
        if self.name == "mConst":
            return 1
        if self.name == "mLinear":
            return dim
        if self.name == "mLinearConst":
            return dim + 1
        return self.n_centers

    def bind(self, dim: int) -> "MeanSpec":
        """Fix radial centers for the given input dimension; no-op otherwise."""
        if self.name != "mRadial" or self.centers:
            return self
        rng = np.random.default_rng(
            np.random.SeedSequence([_RADIAL_SEED, self.n_centers, dim])
        )
        C = latin_hypercube(self.n_centers, dim, rng)
        return MeanSpec(self.name, self.n_centers, tuple(map(tuple, C)))


def parse_mean(expr: str) -> MeanSpec:
    """Parse a mean expression string."""
    text = expr.strip()
    if text in _NAMES[:4]:
        return MeanSpec(text)
    if text.startswith("mRadial(") and text.endswith(")"):
        inner = text[len("mRadial(") : -1].strip()
        try:
            k = int(inner)
        except ValueError:
            raise ParseError(f"mRadial takes an integer count, got {inner!r}",
                             expr.find("(") + 1) from None
        if k < 1:
            raise ParseError("mRadial needs at least one center", expr.find("(") + 1)
        return MeanSpec("mRadial", k)
    raise ParseError(f"unknown mean function {expr!r}", 0)


def mean_to_string(spec: MeanSpec) -> str:
    if spec.name == "mRadial":
        return f"mRadial({spec.n_centers})"
    return spec.name


def features(spec: MeanSpec, x) -> np.ndarray:
    """Feature vector phi(x), length m."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return feature_matrix(spec, x.reshape(1, -1))[:, 0]


def feature_matrix(spec: MeanSpec, X) -> np.ndarray:
    """Feature matrix Phi of shape (m, n), one column per point."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected points of shape (n, d), got {X.shape}")
    n, d = X.shape
    if spec.name == "mZero":
        return np.zeros((0, n))
    if spec.name == "mConst":
        return np.ones((1, n))
    if spec.name == "mLinear":
        return X.T.copy()
    if spec.name == "mLinearConst":
        return np.vstack([np.ones((1, n)), X.T])
    if not spec.centers:
        raise DimensionMismatch("mRadial spec used before bind() fixed its centers")
    C = np.asarray(spec.centers, dtype=float)
    if C.shape[1] != d:
        raise DimensionMismatch(
            f"radial centers of dimension {C.shape[1]}, points of dimension {d}"
        )
    # Gaussian bumps of unit width in unit-box coordinates.
    sq = ((C[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-0.5 * sq)
