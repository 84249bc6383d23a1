"""Main optimization loop: initial design, surrogate fit, criterion
maximization, incremental updates, scheduled hyperparameter relearning and
per-iteration metrics, over continuous boxes or finite candidate sets.

The problem box is mapped affinely onto the unit box and, for the
fixed-variance Gaussian surrogate, responses are normalized to zero mean
and unit variance using the initial design, so kernel defaults and priors
are problem-scale-free.  All randomness flows through per-purpose streams
derived from the run seed, which keeps traces bitwise reproducible for a
deterministic target.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .criteria import (
    CriterionSpec,
    evaluate,
    hedge_select,
    hedge_update,
    new_hedge_state,
    parse_criterion,
)
from .errors import InvalidParams, NoFeasiblePoint
from .hyperlearn import L_LOO, LEARN_NAMES, LearnConfig, learn
from .initdesign import default_n_init, latin_hypercube
from .inneropt import InnerOptimizer, maximize
from .kernels import KernelSpec, parse_kernel
from .means import MeanSpec, parse_mean
from .surrogate import (
    GAUSSIAN_FIXED,
    GAUSSIAN_NIG,
    SURROGATE_NAMES,
    Dataset,
    NIGPrior,
    fit,
    predict,
    update,
    update_responses,
)

logger = logging.getLogger("bayopt")

_STREAM_DESIGN = 0
_STREAM_CRITERION = 1
_STREAM_HEDGE = 2


@dataclass
class KernelParams:
    name: str = "kMaternISO5"
    hp_mean: tuple = (0.5,)
    hp_std: tuple = (1.0,)
    n_hp: int = 1


@dataclass
class MeanParams:
    name: str = "mConst"


@dataclass
class BoundsParams:
    lower: tuple = ()
    upper: tuple = ()


@dataclass
class PriorParams:
    """Normal inverse-gamma prior configuration for S_GAUSSIAN_PROCESS_NORMAL.

    w0 defaults to zeros and W to the identity at the mean's feature count.
    (nu, sigma0_2) is accepted as the scaled-inverse-chi-squared
    parametrization of the same model and maps to alpha=nu/2,
    beta=nu*sigma0_2/2.
    """

    w0: tuple | None = None
    W: object = None  # scalar, matrix, or None for the identity
    alpha: float = 2.0
    beta: float = 1.0

    def to_nig(self, m: int) -> NIGPrior:
        w0 = np.zeros(m) if self.w0 is None else np.asarray(self.w0, dtype=float)
        if self.W is None:
            W = np.eye(m)
        elif np.isscalar(self.W):
            W = float(self.W) * np.eye(m)
        else:
            W = np.asarray(self.W, dtype=float)
        return NIGPrior(w0, W, self.alpha, self.beta)


_TOP_KEYS = {
    "n_iterations", "n_init", "kernel", "mean", "surr_name", "crit_name",
    "crit_params", "n_crit_params", "l_type", "l_update_every", "sigma_n2",
    "sigma_s2", "seed", "bounds", "verbose_level", "prior", "inner_budget",
    "learn_budget",
}


@dataclass
class BoptParams:
    """Full run configuration; mirrors the configuration file key tree."""

    n_iterations: int = 200
    n_init: int = 0  # 0 selects the default 2d+2 (at least m+2)
    kernel: KernelParams = field(default_factory=KernelParams)
    mean: MeanParams = field(default_factory=MeanParams)
    surr_name: str = GAUSSIAN_FIXED
    crit_name: str = "cEI"
    crit_params: tuple = (1.0,)
    n_crit_params: int = 1
    l_type: str = "L_POSTERIOR_ML"
    l_update_every: int = 25
    sigma_n2: float = 1e-4
    sigma_s2: float = 1.0
    seed: int = 0
    bounds: BoundsParams | None = None
    verbose_level: int = 0
    prior: PriorParams = field(default_factory=PriorParams)
    inner_budget: int = 1000
    learn_budget: int = 500

    @staticmethod
    def from_dict(config: dict) -> "BoptParams":
        """Build params from a configuration mapping; unknown keys are rejected."""
        if not isinstance(config, dict):
            raise InvalidParams(f"configuration must be a mapping, got {type(config)}")
        unknown = set(config) - _TOP_KEYS
        if unknown:
            raise InvalidParams(f"unknown parameter keys: {sorted(unknown)}")
        params = BoptParams()
        for key, value in config.items():
            if key == "kernel":
                params.kernel = _sub_params(KernelParams, value, "kernel")
            elif key == "mean":
                params.mean = _sub_params(MeanParams, value, "mean")
            elif key == "bounds":
                params.bounds = _sub_params(BoundsParams, value, "bounds")
            elif key == "prior":
                params.prior = _prior_params(value)
            else:
                setattr(params, key, value)
        params.kernel.hp_mean = tuple(params.kernel.hp_mean)
        params.kernel.hp_std = tuple(params.kernel.hp_std)
        params.crit_params = tuple(params.crit_params)
        if params.bounds is not None:
            params.bounds.lower = tuple(params.bounds.lower)
            params.bounds.upper = tuple(params.bounds.upper)
        return params

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.bounds is None:
            out.pop("bounds")
        return out


def _sub_params(cls, value, label):
    if not isinstance(value, dict):
        raise InvalidParams(f"{label} must be a mapping, got {type(value)}")
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(value) - known
    if unknown:
        raise InvalidParams(f"unknown {label} keys: {sorted(unknown)}")
    return cls(**value)


def _prior_params(value) -> PriorParams:
    if not isinstance(value, dict):
        raise InvalidParams(f"prior must be a mapping, got {type(value)}")
    value = dict(value)
    if "nu" in value or "sigma0_2" in value:
        if not {"nu", "sigma0_2"} <= set(value):
            raise InvalidParams("the scaled-inverse-chi-squared prior needs nu and sigma0_2")
        nu = float(value.pop("nu"))
        sigma0_2 = float(value.pop("sigma0_2"))
        value["alpha"] = nu / 2.0
        value["beta"] = nu * sigma0_2 / 2.0
    return _sub_params(PriorParams, value, "prior")


@dataclass
class TargetProblem:
    """The target callback plus optional constraints and ground truth.

    For continuous runs the domain box comes from BoptParams.bounds; for
    discrete runs `candidates` holds the finite set in problem units.
    known_optimum, when present, is (x_star or None, f_star) and is used
    only for metrics.
    """

    evaluate: object
    check_reachability: object = None
    candidates: np.ndarray | None = None
    known_optimum: tuple | None = None


@dataclass
class TraceRecord:
    index: int  # 1-based over all target evaluations
    iteration: int  # 0 during the initial design
    x: np.ndarray  # problem units
    y: float
    incumbent_x: np.ndarray
    incumbent_y: float
    t_fit_ms: float = 0.0
    t_crit_ms: float = 0.0
    t_target_ms: float = 0.0
    gap: float | None = None
    distance: float | None = None
    avg_regret: float | None = None
    hedge_gains: tuple | None = None
    theta: tuple = ()


@dataclass
class RunTrace:
    records: list = field(default_factory=list)

    def final(self) -> TraceRecord:
        return self.records[-1]


def compute_metrics(trace: RunTrace, known_optimum=None) -> RunTrace:
    """Fill optimality gap, distance error and running average regret.

    Fields stay None when the ground truth is absent.  Regret accumulates
    over every target evaluation, the initial design included.
    """
    if known_optimum is None:
        return trace
    x_star, f_star = known_optimum
    x_star = None if x_star is None else np.asarray(x_star, dtype=float)
    total = 0.0
    for count, rec in enumerate(trace.records, start=1):
        total += rec.y
        rec.gap = rec.incumbent_y - f_star
        rec.avg_regret = (total - count * f_star) / count
        if x_star is not None:
            rec.distance = float(np.linalg.norm(rec.incumbent_x - x_star))
    return trace


def _prepare(params: BoptParams, dim: int):
    """Validate the configuration against the domain dimension and parse specs."""
    if params.n_iterations < 1:
        raise InvalidParams(f"n_iterations must be at least 1, got {params.n_iterations}")
    if params.n_init < 0:
        raise InvalidParams(f"n_init must be nonnegative, got {params.n_init}")
    if params.sigma_n2 < 0:
        raise InvalidParams(f"sigma_n2 must be nonnegative, got {params.sigma_n2}")
    if params.sigma_s2 <= 0:
        raise InvalidParams(f"sigma_s2 must be positive, got {params.sigma_s2}")
    if params.surr_name not in SURROGATE_NAMES:
        raise InvalidParams(f"unknown surrogate {params.surr_name!r}")
    if params.l_type not in LEARN_NAMES:
        raise InvalidParams(f"unknown learning type {params.l_type!r}")
    if params.l_update_every < 0:
        raise InvalidParams("l_update_every must be nonnegative (0 freezes after the first learn)")
    if params.seed < 0:
        raise InvalidParams(f"seed must be nonnegative, got {params.seed}")

    kernel = parse_kernel(params.kernel.name)
    n_hp = kernel.n_hyperparameters(dim)
    if params.kernel.n_hp != n_hp:
        raise InvalidParams(
            f"kernel {params.kernel.name} has {n_hp} hyperparameters in dimension "
            f"{dim}, configuration says n_hp={params.kernel.n_hp}"
        )
    if len(params.kernel.hp_mean) != n_hp or len(params.kernel.hp_std) != n_hp:
        raise InvalidParams(
            f"hp_mean/hp_std must have {n_hp} entries, got "
            f"{len(params.kernel.hp_mean)}/{len(params.kernel.hp_std)}"
        )
    if any(v <= 0 for v in params.kernel.hp_mean):
        raise InvalidParams("hp_mean entries must be positive (initial theta values)")

    mean = parse_mean(params.mean.name).bind(dim)

    if params.n_crit_params != len(params.crit_params):
        raise InvalidParams(
            f"n_crit_params={params.n_crit_params} but {len(params.crit_params)} "
            "criterion parameters were given"
        )
    crit = parse_criterion(params.crit_name, params.crit_params)

    learn_config = LearnConfig(
        method=params.l_type,
        update_every=params.l_update_every,
        log_prior_mean=tuple(math.log(v) for v in params.kernel.hp_mean),
        log_prior_std=tuple(params.kernel.hp_std),
    )
    return kernel, mean, crit, learn_config


class _Engine:
    """One optimization run; owns the RNG streams and the trace."""

    def __init__(self, problem: TargetProblem, params: BoptParams,
                 lower: np.ndarray, upper: np.ndarray,
                 candidates_unit: np.ndarray | None = None):
        self.problem = problem
        self.params = params
        self.lower = lower
        self.span = upper - lower
        self.dim = lower.shape[0]
        self.kernel_base, self.mean, self.crit, self.learn_config = _prepare(params, self.dim)
        self.candidates_unit = candidates_unit
        self.feasible_candidates: list[int] = []
        self.tested: set[int] = set()
        self.hedge_state = None
        self.rng_design = self._rng(_STREAM_DESIGN)
        self.rng_hedge = self._rng(_STREAM_HEDGE)
        self.trace = RunTrace()
        self.raw_y: list[float] = []
        self.y_shift = 0.0
        self.y_scale = 1.0
        self.incumbent_x = None
        self.incumbent_y = math.inf
        self.theta = np.asarray(params.kernel.hp_mean, dtype=float)
        self.prior = None
        if params.surr_name == GAUSSIAN_NIG:
            self.prior = params.prior.to_nig(self.mean.n_features(self.dim))

    def _rng(self, stream: int, iteration: int | None = None) -> np.random.Generator:
        key = [self.params.seed, stream]
        if iteration is not None:
            key.append(iteration)
        return np.random.default_rng(np.random.SeedSequence(key))

    def demap(self, xu: np.ndarray) -> np.ndarray:
        return self.lower + xu * self.span

    def _reachable(self, xu: np.ndarray) -> bool:
        if self.problem.check_reachability is None:
            return True
        return bool(self.problem.check_reachability(self.demap(xu)))

    def _evaluate_target(self, xu: np.ndarray) -> tuple[float, float]:
        t0 = time.perf_counter()
        y = float(self.problem.evaluate(self.demap(xu)))
        self.raw_y.append(y)
        return y, (time.perf_counter() - t0) * 1e3

    def _refresh_normalization(self, refit: bool = False) -> np.ndarray:
        """Internal responses for the surrogate: zero-mean unit-variance for
        the fixed-variance kind (its signal variance is a constant, so the
        internal scale must match the data), identity otherwise.

        The scale constants come from the initial design and stay frozen for
        the rest of the run: letting the scale drift as better responses
        arrive rebalances the improvement criterion toward exploration and
        stalls the final descent.
        """
        ys = np.asarray(self.raw_y)
        if self.params.surr_name == GAUSSIAN_FIXED and refit:
            self.y_shift = float(ys.mean())
            sd = float(ys.std())
            self.y_scale = sd if sd > 1e-12 else 1.0
        return (ys - self.y_shift) / self.y_scale

    def _record(self, xu, y_raw, iteration, t_fit=0.0, t_crit=0.0, t_target=0.0,
                hedge_gains=None):
        x = self.demap(xu)
        if y_raw < self.incumbent_y:
            self.incumbent_y = y_raw
            self.incumbent_x = x
        self.trace.records.append(TraceRecord(
            index=len(self.trace.records) + 1,
            iteration=iteration,
            x=x,
            y=y_raw,
            incumbent_x=self.incumbent_x,
            incumbent_y=self.incumbent_y,
            t_fit_ms=t_fit,
            t_crit_ms=t_crit,
            t_target_ms=t_target,
            hedge_gains=hedge_gains,
            theta=tuple(self.theta),
        ))

    # -- initial design ----------------------------------------------------
    def _initial_design_continuous(self, n_init: int) -> tuple[np.ndarray, np.ndarray]:
        X = latin_hypercube(n_init, self.dim, self.rng_design)
        attempts = 0
        budget = 100 * n_init
        rows = []
        for i in range(n_init):
            xu = X[i]
            attempts += 1
            while not self._reachable(xu):
                if attempts >= budget:
                    raise NoFeasiblePoint(
                        f"initial design found only {len(rows)} feasible points "
                        f"in {attempts} attempts"
                    )
                xu = self.rng_design.random(self.dim)
                attempts += 1
            rows.append(xu)
        ys = []
        for xu in rows:
            y, t_target = self._evaluate_target(xu)
            ys.append(y)
            self._record(xu, y, iteration=0, t_target=t_target)
        return np.asarray(rows), np.asarray(ys)

    def _initial_design_discrete(self, n_init: int) -> tuple[np.ndarray, np.ndarray]:
        feasible = [i for i in range(self.candidates_unit.shape[0])
                    if self._reachable(self.candidates_unit[i])]
        if not feasible:
            raise NoFeasiblePoint("no reachable candidate in the discrete set")
        k = min(n_init, len(feasible))
        chosen = self.rng_design.choice(len(feasible), size=k, replace=False)
        rows, ys = [], []
        for j in chosen:
            idx = feasible[j]
            xu = self.candidates_unit[idx]
            y, t_target = self._evaluate_target(xu)
            self.tested.add(idx)
            rows.append(xu)
            ys.append(y)
            self._record(xu, y, iteration=0, t_target=t_target)
        self.feasible_candidates = feasible
        return np.asarray(rows), np.asarray(ys)

    # -- surrogate management ----------------------------------------------
    def _fit(self, data: Dataset, sigma_n2: float):
        kernel = self.kernel_base.bind(self.theta, self.dim)
        return fit(self.params.surr_name, kernel, self.mean, data, sigma_n2,
                   prior=self.prior, sigma_s2=self.params.sigma_s2)

    def _learn(self, data: Dataset, sigma_n2: float) -> None:
        # With too little data the scores are undefined; keep theta frozen.
        m = self.mean.n_features(self.dim)
        needed = m + 2 if self.params.l_type == L_LOO else m + 1
        if data.n < needed:
            return
        inner = InnerOptimizer(budget=self.params.learn_budget, seed=self.params.seed)
        kernel = self.kernel_base.bind(self.theta, self.dim)
        self.theta = learn(self.learn_config, data, kernel, self.mean, sigma_n2,
                           inner, prior=self.prior)

    def _relearn_due(self, iteration: int) -> bool:
        every = self.params.l_update_every
        return every > 0 and iteration % every == 0

    # -- criterion maximization ---------------------------------------------
    def _criterion_objective(self, spec: CriterionSpec, state, rng):
        incumbent_internal = state.data.incumbent[1]

        def objective(xu):
            return evaluate(spec, predict(state, xu), incumbent_internal, rng)

        return objective

    def _maximize_continuous(self, spec, state, rng) -> np.ndarray:
        objective = self._criterion_objective(spec, state, rng)
        feasible = None
        if self.problem.check_reachability is not None:
            feasible = self._reachable
        inner = InnerOptimizer(budget=self.params.inner_budget, seed=self.params.seed)
        best, _ = maximize(objective, np.zeros(self.dim), np.ones(self.dim),
                           inner, feasible=feasible)
        return best

    def _maximize_discrete(self, spec, state, rng) -> np.ndarray:
        objective = self._criterion_objective(spec, state, rng)
        best_idx, best_val = None, -math.inf
        for idx in self.feasible_candidates:
            if idx in self.tested:
                continue
            val = objective(self.candidates_unit[idx])
            if val > best_val:
                best_val, best_idx = val, idx
        return self.candidates_unit[best_idx]

    def _select_query(self, state, iteration: int):
        rng = self._rng(_STREAM_CRITERION, iteration)
        discrete = self.candidates_unit is not None
        pick = self._maximize_discrete if discrete else self._maximize_continuous
        if self.hedge_state is not None:
            nominees = [pick(child, state, rng) for child in self.crit.children]
            query, _ = hedge_select(self.hedge_state, nominees, self.rng_hedge)
            return query
        return pick(self.crit, state, rng)

    # -- run -----------------------------------------------------------------
    def run(self):
        params = self.params
        n_init = params.n_init or default_n_init(self.dim, self.mean.n_features(self.dim))
        if self.candidates_unit is not None:
            X, _ = self._initial_design_discrete(n_init)
        else:
            X, _ = self._initial_design_continuous(n_init)

        data = Dataset(X, self._refresh_normalization(refit=True))

        t0 = time.perf_counter()
        self._learn(data, params.sigma_n2)
        state = self._fit(data, params.sigma_n2)
        self.trace.records[-1].t_fit_ms = (time.perf_counter() - t0) * 1e3
        self.trace.records[-1].theta = tuple(self.theta)

        self.hedge_state = new_hedge_state(self.crit) if self.crit.is_hedge() else None

        for iteration in range(1, params.n_iterations + 1):
            if self.candidates_unit is not None:
                untested = len(self.feasible_candidates) - len(self.tested)
                if untested == 0:
                    break

            tc = time.perf_counter()
            query = self._select_query(state, iteration)
            t_crit = (time.perf_counter() - tc) * 1e3

            y, t_target = self._evaluate_target(query)
            if self.candidates_unit is not None:
                match = np.flatnonzero((self.candidates_unit == query).all(axis=1))
                self.tested.update(int(m) for m in match)

            tf = time.perf_counter()
            if params.surr_name == GAUSSIAN_FIXED:
                state = update_responses(state, query, self._refresh_normalization())
            else:
                state = update(state, query, y)
            if self.hedge_state is not None:
                hedge_update(self.hedge_state, state)
            if self._relearn_due(iteration):
                self._learn(state.data, state.sigma_n2)
                state = self._fit(state.data, state.sigma_n2)
            t_fit = (time.perf_counter() - tf) * 1e3

            gains = None if self.hedge_state is None else tuple(self.hedge_state.gains)
            self._record(query, y, iteration, t_fit=t_fit, t_crit=t_crit,
                         t_target=t_target, hedge_gains=gains)
            if params.verbose_level >= 1:
                logger.info(
                    "iter %d: y=%.6g incumbent=%.6g", iteration, y, self.incumbent_y
                )

        compute_metrics(self.trace, self.problem.known_optimum)
        return self.incumbent_x, self.incumbent_y, self.trace


def run_continuous(problem: TargetProblem, params: BoptParams):
    """Optimize over the continuous box given by params.bounds.

    Returns (best_x, best_y, trace) in problem units; deterministic for a
    fixed seed and a deterministic target.
    """
    if params.bounds is None:
        raise InvalidParams("continuous runs need bounds in the configuration")
    lower = np.asarray(params.bounds.lower, dtype=float)
    upper = np.asarray(params.bounds.upper, dtype=float)
    if lower.ndim != 1 or lower.shape != upper.shape or lower.shape[0] < 1:
        raise InvalidParams(f"malformed bounds: lower {lower.shape}, upper {upper.shape}")
    if not np.all(lower < upper):
        raise InvalidParams("bounds need lower < upper elementwise")
    engine = _Engine(problem, params, lower, upper)
    return engine.run()


def run_discrete(problem: TargetProblem, params: BoptParams):
    """Optimize over the finite candidate set in problem.candidates.

    The criterion is maximized by exhaustive scoring of untested candidates,
    and the loop stops early once every candidate has been evaluated.
    """
    if problem.candidates is None:
        raise InvalidParams("discrete runs need problem.candidates")
    cands = np.asarray(problem.candidates, dtype=float)
    if cands.ndim != 2 or cands.shape[0] < 1:
        raise InvalidParams(f"candidates must be (n, d) with n >= 1, got {cands.shape}")
    lower = cands.min(axis=0)
    upper = cands.max(axis=0)
    # Degenerate dimensions map to unit coordinate 0 so that demapping
    # reproduces the candidate exactly.
    span = np.where(upper > lower, upper - lower, 1.0)
    cands_unit = (cands - lower) / span
    cands_unit[:, upper == lower] = 0.0
    engine = _Engine(problem, params, lower, lower + span, candidates_unit=cands_unit)
    return engine.run()
