"""Box-bounded derivative-free maximizer used for criterion optimization and
hyperparameter learning.

Two stages: a deterministic dividing-rectangles global sweep over the box,
then Nelder-Mead simplex refinement from the best point found, clamped to
the box.  Objective evaluations are hard-capped at the configured budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import direct as _scipy_direct
from scipy.optimize import minimize as _scipy_minimize

from .errors import InvalidParams, NoFeasiblePoint

# Sentinel returned to the underlying minimizers for infeasible or rejected
# probes; finite so the rectangle bookkeeping stays well defined.
_REJECTED = 1e100


@dataclass(frozen=True)
class InnerOptimizer:
    budget: int = 1000
    global_frac: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.budget < 10:
            raise InvalidParams(f"inner budget must be at least 10, got {self.budget}")
        if not 0.0 < self.global_frac < 1.0:
            raise InvalidParams(f"global_frac must lie in (0, 1), got {self.global_frac}")


class _Tracker:
    """Counts objective evaluations and keeps the best feasible point seen."""

    def __init__(self, obj, lower, upper, free, budget, feasible):
        self.obj = obj
        self.lower = lower
        self.upper = upper
        self.free = free
        self.budget = budget
        self.feasible = feasible
        self.count = 0
        self.best_x = None
        self.best_val = -math.inf

    def embed(self, z):
        x = self.lower.copy()
        x[self.free] = np.clip(z, self.lower[self.free], self.upper[self.free])
        return x

    def __call__(self, z):
        if self.count >= self.budget:
            return _REJECTED
        x = self.embed(np.asarray(z, dtype=float))
        self.count += 1
        if self.feasible is not None and not self.feasible(x):
            return _REJECTED
        val = float(self.obj(x))
        if math.isnan(val) or val == -math.inf:
            return _REJECTED
        if val > self.best_val:
            self.best_val = val
            self.best_x = x
        return -val


def maximize(obj, lower, upper, opt: InnerOptimizer, feasible=None):
    """Maximize obj over the box, returning (point, value) of the best
    feasible probe.  Deterministic for a given configuration.

    Raises NoFeasiblePoint when every probe fails the feasibility predicate
    (or the objective rejects everything with -inf/NaN).
    """
    lower = np.asarray(lower, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    if lower.shape != upper.shape:
        raise InvalidParams(f"box bounds of lengths {lower.shape[0]} vs {upper.shape[0]}")
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise InvalidParams("box bounds must be finite")
    if np.any(upper < lower):
        raise InvalidParams("box needs lower <= upper elementwise")

    free = upper > lower
    tracker = _Tracker(obj, lower, upper, free, opt.budget, feasible)

    if not np.any(free):
        # Degenerate box: a single candidate point.
        tracker(lower[free])
        if tracker.best_x is None:
            raise NoFeasiblePoint("the degenerate box point is infeasible")
        return tracker.best_x, tracker.best_val

    bounds = list(zip(lower[free], upper[free]))
    n_global = max(1, int(round(opt.global_frac * opt.budget)))
    # Every DIRECT iteration evaluates at least two points, so an iteration
    # cap equal to the budget never binds before maxfun does; scipy's cost
    # grows with maxiter, so keep it tight.
    _scipy_direct(tracker, bounds, maxfun=n_global, maxiter=max(1000, n_global))

    if tracker.best_x is not None and tracker.count < opt.budget:
        x0 = tracker.best_x[free]
        _scipy_minimize(
            tracker,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "maxfev": max(1, opt.budget - tracker.count),
                "xatol": 1e-10,
                "fatol": 1e-12,
            },
        )

    if tracker.best_x is None:
        raise NoFeasiblePoint(f"no feasible point in {tracker.count} probes")
    return tracker.best_x, tracker.best_val
