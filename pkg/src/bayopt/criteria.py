"""Acquisition criteria over the surrogate posterior.

Atomic criteria (cEI, cLCB, cPOI, cThompsonSampling) score a predictive
marginal; higher is better, minimization convention throughout.  Two
metacriteria compose them: cLinearComb takes a weighted sum, and cHedge
runs a softmax portfolio over its children's accumulated gains.

Criterion parameters come from the crit_params configuration list and are
consumed left-to-right in tree order; exhausted slots fall back to the
defaults EI g=1, LCB beta=1, POI epsilon=0.01.  cLinearComb weights are
consumed after its children's slots and have no default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import InvalidParams, ParamCountMismatch, ParseError
from .surrogate import PosteriorState, Prediction, predict

_ATOMS = ("cEI", "cLCB", "cPOI", "cThompsonSampling")
_COMBINATORS = ("cHedge", "cLinearComb")

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class CriterionSpec:
    """Node of a bound acquisition tree.

    params holds the node's own bound values: (g,) for cEI, (beta,) for
    cLCB, (epsilon,) for cPOI, the weights for cLinearComb and (eta,) for
    cHedge.
    """

    name: str
    children: tuple["CriterionSpec", ...] = ()
    params: tuple[float, ...] = ()

    def is_hedge(self) -> bool:
        return self.name == "cHedge"


@dataclass
class HedgeState:
    """Cumulative per-child gains and the nominees of the last round."""

    gains: np.ndarray
    eta: float = 1.0
    last_nominees: np.ndarray | None = None


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def parse(self):
        node = self._expr()
        self._skip_ws()
        if self.pos != len(self.text):
            raise ParseError(f"unexpected trailing input {self.text[self.pos:]!r}", self.pos)
        return node

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _expr(self):
        self._skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] == "_"
        ):
            self.pos += 1
        name = self.text[start : self.pos]
        if not name:
            raise ParseError("expected a criterion name", start)
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
                    return (name, children)
                else:
                    raise ParseError(f"expected ',' or ')', got {ch!r}", self.pos)
        if name not in _ATOMS:
            raise ParseError(f"unknown criterion name {name!r}", start)
        if self.pos < len(self.text) and self.text[self.pos] == "(":
            raise ParseError(f"criterion {name} takes no argument list", self.pos)
        return (name, None)


_DEFAULTS = {"cEI": 1.0, "cLCB": 1.0, "cPOI": 0.01}


def _bind(node, params: list) -> CriterionSpec:
    name, children = node
    if children is None:
        if name == "cThompsonSampling":
            return CriterionSpec(name)
        value = params.pop(0) if params else _DEFAULTS[name]
        if name == "cEI":
            g = int(round(value))
            if g < 1:
                raise InvalidParams(f"EI exponent must be a positive integer, got {value}")
            return CriterionSpec(name, (), (float(g),))
        return CriterionSpec(name, (), (float(value),))
    bound = tuple(_bind(c, params) for c in children)
    if name == "cHedge":
        # A single-child portfolio is legal and behaves exactly like its child.
        return CriterionSpec(name, bound, (1.0,))
    # cLinearComb: one weight per child, consumed after the children's slots.
    if len(params) < len(bound):
        raise ParamCountMismatch(
            f"cLinearComb with {len(bound)} children needs as many weights, "
            f"{len(params)} parameters left"
        )
    weights = tuple(float(params.pop(0)) for _ in bound)
    return CriterionSpec(name, bound, weights)


def parse_criterion(expr: str, params=()) -> CriterionSpec:
    """Parse a criterion expression and bind its parameters in tree order."""
    tree = _Parser(expr).parse()
    remaining = [float(p) for p in params]
    spec = _bind(tree, remaining)
    if remaining:
        raise ParamCountMismatch(
            f"{len(remaining)} unused criterion parameters for {expr!r}"
        )
    return spec


def criterion_to_string(spec: CriterionSpec) -> str:
    if not spec.children:
        return spec.name
    return f"{spec.name}({','.join(criterion_to_string(c) for c in spec.children)})"


def _norm_pdf(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def _expected_improvement(mean, sigma, incumbent_y, g: int) -> float:
    # E[(y+ - Y)^g ; Y < y+] = sigma^g I_g(z) with the recursion
    # I_{k+1} = z I_k + k I_{k-1}, I_0 = Phi(z), I_1 = z Phi(z) + phi(z).
    z = (incumbent_y - mean) / sigma
    i_prev = float(ndtr(z))
    if g == 0:
        return i_prev
    i_cur = z * i_prev + _norm_pdf(z)
    for k in range(1, g):
        i_prev, i_cur = i_cur, z * i_cur + k * i_prev
    return sigma**g * i_cur


def evaluate(spec: CriterionSpec, pred: Prediction, incumbent_y: float,
             rng: np.random.Generator) -> float:
    """Score one predictive marginal; higher is better.

    Student-t marginals are scored with the Gaussian formulas as a
    moment-matched approximation.  cHedge is a portfolio, not a pointwise
    score; use hedge_select/hedge_update instead.
    """
    name = spec.name
    sigma = math.sqrt(pred.variance)
    if name == "cEI":
        return _expected_improvement(pred.mean, sigma, incumbent_y, int(spec.params[0]))
    if name == "cLCB":
        return -(pred.mean - spec.params[0] * sigma)
    if name == "cPOI":
        return float(ndtr((incumbent_y - spec.params[0] - pred.mean) / sigma))
    if name == "cThompsonSampling":
        if math.isinf(pred.dof):
            draw = rng.standard_normal()
        else:
            draw = rng.standard_t(pred.dof)
        return -(pred.mean + sigma * draw)
    if name == "cLinearComb":
        return sum(
            w * evaluate(child, pred, incumbent_y, rng)
            for w, child in zip(spec.params, spec.children)
        )
    raise InvalidParams("cHedge cannot be evaluated pointwise; it selects among nominees")


def new_hedge_state(spec: CriterionSpec) -> HedgeState:
    if not spec.is_hedge():
        raise InvalidParams(f"expected a cHedge spec, got {spec.name}")
    return HedgeState(gains=np.zeros(len(spec.children)), eta=float(spec.params[0]))


def hedge_select(state: HedgeState, nominees, rng: np.random.Generator):
    """Pick one child's nominee with probability proportional to exp(eta * gain).

    Records the nominees for the upcoming gain update and returns
    (point, child_index).
    """
    nominees = np.asarray(nominees, dtype=float)
    if nominees.shape[0] != state.gains.shape[0]:
        raise InvalidParams(
            f"{nominees.shape[0]} nominees for {state.gains.shape[0]} children"
        )
    scaled = state.eta * state.gains
    scaled -= scaled.max()  # softmax is shift invariant; keep exp in range
    weights = np.exp(scaled)
    probs = weights / weights.sum()
    idx = int(rng.choice(state.gains.shape[0], p=probs))
    state.last_nominees = nominees
    return nominees[idx], idx


def hedge_update(state: HedgeState, posterior: PosteriorState) -> HedgeState:
    """Reward every child with the negated posterior mean at its nominee,
    after the surrogate has absorbed the new observation."""
    if state.last_nominees is None:
        return state
    for i, nominee in enumerate(state.last_nominees):
        state.gains[i] += -predict(posterior, nominee).mean
    return state
