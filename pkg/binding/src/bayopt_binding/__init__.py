"""Callback front end for the bayopt optimizer.

One exported function: pass a target callable, the domain box, and a plain
parameter dictionary; get back the best point, its response, and the run
trace as a list of row mappings.  The dictionary keys are the optimizer's
configuration field names and unknown keys are rejected.

    from bayopt_binding import optimize

    best_x, best_y, rows = optimize(
        lambda x: sum(v * v for v in x),
        lower=[-1.0, -1.0],
        upper=[1.0, 1.0],
        params={"n_iterations": 30, "seed": 7},
    )
"""

from __future__ import annotations

import numpy as np

from bayopt import BoptParams, BoundsParams, InvalidParams, TargetProblem, run_continuous
from bayopt.errors import BayoptError

__all__ = ["CallbackError", "optimize"]
__version__ = "0.1.0"


class CallbackError(BayoptError):
    """The user callback raised; carries the offending query point."""

    def __init__(self, query, evaluation_index: int, cause: BaseException):
        self.query = np.asarray(query, dtype=float)
        self.evaluation_index = evaluation_index
        super().__init__(
            f"target callback raised at evaluation {evaluation_index}, "
            f"query {self.query.tolist()}: {cause!r}"
        )


def optimize(func, lower, upper, params=None):
    """Run the continuous optimizer on a user callback.

    Parameters
    ----------
    func : callable
        Maps a point (1-D numpy array in problem units) to a scalar response.
        Called strictly sequentially; exceptions abort the run and surface
        as CallbackError with the offending query attached.
    lower, upper : sequences of float
        The domain box, one entry per dimension.
    params : mapping, optional
        Optimizer configuration; keys are the BoptParams field names
        (nested mappings for "kernel", "mean", "prior").  Unknown keys are
        rejected with InvalidParams.  The domain box comes from the
        lower/upper arguments, so a "bounds" key is rejected too.

    Returns
    -------
    (best_x, best_y, rows) : (list[float], float, list[dict])
        The incumbent in problem units and one row mapping per target
        evaluation (iteration, x, y, incumbent, gap, distance, regret,
        t_fit_ms, t_crit_ms).
    """
    config = dict(params or {})
    if "bounds" in config:
        raise InvalidParams(
            "the domain box comes from the lower/upper arguments, not params"
        )
    bopt = BoptParams.from_dict(config)
    bopt.bounds = BoundsParams(
        lower=tuple(float(v) for v in lower),
        upper=tuple(float(v) for v in upper),
    )

    evaluations = 0

    def wrapped(x):
        nonlocal evaluations
        index = evaluations
        evaluations += 1
        try:
            return float(func(np.asarray(x, dtype=float)))
        except Exception as exc:
            raise CallbackError(x, index, exc) from exc

    problem = TargetProblem(evaluate=wrapped)
    best_x, best_y, trace = run_continuous(problem, bopt)

    rows = [
        {
            "iteration": rec.iteration,
            "x": [float(v) for v in rec.x],
            "y": rec.y,
            "incumbent": rec.incumbent_y,
            "gap": rec.gap,
            "distance": rec.distance,
            "regret": rec.avg_regret,
            "t_fit_ms": rec.t_fit_ms,
            "t_crit_ms": rec.t_crit_ms,
        }
        for rec in trace.records
    ]
    return [float(v) for v in best_x], float(best_y), rows
