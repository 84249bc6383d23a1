"""Covariance functions and their composition grammar.

Kernel expressions use the string syntax from the configuration layer:
atoms kSEISO, kSEARD, kMaternISO1, kMaternISO3, kMaternISO5, kConst and
n-ary combinators kSum(...), kProd(...), nested arbitrarily.
Hyperparameters are bound separately from configuration after parsing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, InvalidParams, ParseError

_SQRT3 = math.sqrt(3.0)
_SQRT5 = math.sqrt(5.0)

_ATOMS = ("kSEISO", "kSEARD", "kMaternISO1", "kMaternISO3", "kMaternISO5", "kConst")
_COMBINATORS = ("kSum", "kProd")


@dataclass(frozen=True)
class KernelSpec:
    """Node of a parsed covariance expression tree.

    theta holds this node's own hyperparameters (length scales in input
    units, or the constant's amplitude); children carry their own.  A
    freshly parsed tree has empty theta until bind() attaches values.
    """

    name: str
    children: tuple["KernelSpec", ...] = ()
    theta: tuple[float, ...] = ()

    def n_hyperparameters(self, dim: int) -> int:
        if self.name == "kSEARD":
            return dim
        if self.name in _ATOMS:
            return 1
        return sum(c.n_hyperparameters(dim) for c in self.children)

    def bind(self, theta, dim: int) -> "KernelSpec":
        """Attach hyperparameter values, consumed left-to-right in tree order."""
        theta = [float(t) for t in np.asarray(theta).reshape(-1)]
        expected = self.n_hyperparameters(dim)
        if len(theta) != expected:
            raise InvalidParams(
                f"kernel {kernel_to_string(self)} takes {expected} hyperparameters "
                f"in dimension {dim}, got {len(theta)}"
            )
        if any(t <= 0.0 for t in theta):
            raise InvalidParams("kernel hyperparameters must be strictly positive")
        bound, rest = _bind(self, theta, dim)
        assert not rest
        return bound

    def theta_flat(self) -> np.ndarray:
        """Bound hyperparameters concatenated in tree order."""
        if self.name in _ATOMS:
            return np.asarray(self.theta, dtype=float)
        parts = [c.theta_flat() for c in self.children]
        return np.concatenate(parts) if parts else np.zeros(0)


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric kernel matrix with the nugget already on the diagonal."""

    K: np.ndarray
    nugget: float


def _bind(spec: KernelSpec, theta: list, dim: int):
    if spec.name in _ATOMS:
        k = dim if spec.name == "kSEARD" else 1
        return KernelSpec(spec.name, (), tuple(theta[:k])), theta[k:]
    children = []
    rest = theta
    for child in spec.children:
        bound, rest = _bind(child, rest, dim)
        children.append(bound)
    return KernelSpec(spec.name, tuple(children)), rest


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def parse(self) -> KernelSpec:
        spec = self._expr()
        self._skip_ws()
        if self.pos != len(self.text):
            raise ParseError(f"unexpected trailing input {self.text[self.pos:]!r}", self.pos)
        return spec

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _name(self) -> tuple[str, int]:
        self._skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] == "_"
        ):
            self.pos += 1
        if self.pos == start:
            raise ParseError("expected a kernel name", start)
        return self.text[start : self.pos], start

    def _expr(self) -> KernelSpec:
        name, start = self._name()
        self._skip_ws()
        if name in _COMBINATORS:
            if self.pos >= len(self.text) or self.text[self.pos] != "(":
                raise ParseError(f"combinator {name} requires an argument list", self.pos)
            self.pos += 1
            children = [self._expr()]
            while True:
                self._skip_ws()
                if self.pos >= len(self.text):
                    raise ParseError("unbalanced parentheses", self.pos)
                ch = self.text[self.pos]
                if ch == ",":
                    self.pos += 1
                    children.append(self._expr())
                elif ch == ")":
                    self.pos += 1
                    return KernelSpec(name, tuple(children))
                else:
                    raise ParseError(f"expected ',' or ')', got {ch!r}", self.pos)
        if name not in _ATOMS:
            raise ParseError(f"unknown kernel name {name!r}", start)
        self._skip_ws()
        if self.pos < len(self.text) and self.text[self.pos] == "(":
            raise ParseError(f"kernel {name} takes no argument list", self.pos)
        return KernelSpec(name)


def parse_kernel(expr: str) -> KernelSpec:
    """Parse a kernel expression into its tree; hyperparameters stay unbound."""
    parser = _Parser(expr)
    spec = parser.parse()
    if parser.pos == 0:
        raise ParseError("empty kernel expression", 0)
    return spec


def kernel_to_string(spec: KernelSpec) -> str:
    """Canonical (whitespace-free) form; parse(kernel_to_string(s)) == s modulo theta."""
    if spec.name in _ATOMS:
        return spec.name
    return f"{spec.name}({','.join(kernel_to_string(c) for c in spec.children)})"


def _require_bound(spec: KernelSpec):
    if spec.name in _ATOMS and not spec.theta:
        raise InvalidParams(f"kernel node {spec.name} has unbound hyperparameters")


def _pairwise(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    name = spec.name
    if name == "kSum":
        out = _pairwise(spec.children[0], A, B).copy()
        for child in spec.children[1:]:
            out += _pairwise(child, A, B)
        return out
    if name == "kProd":
        out = _pairwise(spec.children[0], A, B).copy()
        for child in spec.children[1:]:
            out *= _pairwise(child, A, B)
        return out
    _require_bound(spec)
    if name == "kConst":
        return np.full((A.shape[0], B.shape[0]), spec.theta[0] ** 2)
    if name == "kSEARD":
        ell = np.asarray(spec.theta, dtype=float)
        if ell.shape[0] != A.shape[1]:
            raise DimensionMismatch(
                f"kSEARD has {ell.shape[0]} length scales but points have dimension {A.shape[1]}"
            )
        return np.exp(-0.5 * cdist(A / ell, B / ell, "sqeuclidean"))
    ell = spec.theta[0]
    if name == "kSEISO":
        return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * ell * ell))
    r = cdist(A, B, "euclidean")
    if name == "kMaternISO1":
        return np.exp(-r / ell)
    if name == "kMaternISO3":
        t = (_SQRT3 / ell) * r
        return (1.0 + t) * np.exp(-t)
    if name == "kMaternISO5":
        t = (_SQRT5 / ell) * r
        return (1.0 + t + t * t / 3.0) * np.exp(-t)
    raise AssertionError(f"unhandled kernel node {name}")


def _as_points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected points of shape (n, d), got {X.shape}")
    return X


def kernel_eval(spec: KernelSpec, x1, x2) -> float:
    """Covariance between two single points."""
    a, b = _as_points(x1), _as_points(x2)
    if a.shape != b.shape:
        raise DimensionMismatch(f"points of dimension {a.shape[1]} vs {b.shape[1]}")
    return float(_pairwise(spec, a, b)[0, 0])


def gram(spec: KernelSpec, X, nugget: float) -> GramMatrix:
    """Kernel matrix of a point set plus nugget on the diagonal.

    The upper triangle is computed and mirrored so the result is exactly
    symmetric in floating point.
    """
    if nugget < 0.0:
        raise InvalidParams(f"nugget must be nonnegative, got {nugget}")
    X = _as_points(X)
    K = _pairwise(spec, X, X)
    upper = np.triu(K)
    K = upper + np.triu(K, 1).T
    K[np.diag_indices_from(K)] += nugget
    return GramMatrix(K, float(nugget))


def cross_vector(spec: KernelSpec, X, q) -> np.ndarray:
    """Covariances of every stored point with one query point."""
    X = _as_points(X)
    q = np.asarray(q, dtype=float).reshape(1, -1)
    if q.shape[1] != X.shape[1]:
        raise DimensionMismatch(f"query of dimension {q.shape[1]}, points of {X.shape[1]}")
    return _pairwise(spec, X, q)[:, 0]
