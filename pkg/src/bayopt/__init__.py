"""Bayesian global optimization with GP / Student-t surrogates.

Typical usage follows three steps: define the target callback, set the
parameters, run the optimizer.

    from bayopt import BoptParams, TargetProblem, run_continuous

    params = BoptParams.from_dict({
        "n_iterations": 50,
        "bounds": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        "seed": 7,
    })
    problem = TargetProblem(evaluate=lambda x: ((x - 0.3) ** 2).sum())
    best_x, best_y, trace = run_continuous(problem, params)
"""

from . import errors
from .criteria import (
    CriterionSpec,
    HedgeState,
    evaluate,
    hedge_select,
    hedge_update,
    new_hedge_state,
    parse_criterion,
)
from .errors import (
    BayoptError,
    DimensionMismatch,
    InsufficientData,
    InvalidParams,
    NoFeasiblePoint,
    NotPositiveDefinite,
    ParamCountMismatch,
    ParseError,
)
from .hyperlearn import (
    L_LOO,
    L_MAP,
    L_ML,
    L_POSTERIOR_ML,
    LearnConfig,
    learn,
    score_loo,
    score_map,
    score_ml,
    score_posterior_ml,
)
from .initdesign import default_n_init, latin_hypercube, uniform
from .inneropt import InnerOptimizer, maximize
from .kernels import (
    GramMatrix,
    KernelSpec,
    cross_vector,
    gram,
    kernel_eval,
    kernel_to_string,
    parse_kernel,
)
from .means import MeanSpec, feature_matrix, features, mean_to_string, parse_mean
from .optimizer import (
    BoptParams,
    BoundsParams,
    KernelParams,
    MeanParams,
    PriorParams,
    RunTrace,
    TargetProblem,
    TraceRecord,
    compute_metrics,
    run_continuous,
    run_discrete,
)
from .surrogate import (
    GAUSSIAN_FIXED,
    GAUSSIAN_NIG,
    STUDENT_T_JEFFREYS,
    SURROGATE_NAMES,
    Dataset,
    NIGPrior,
    PosteriorState,
    Prediction,
    fit,
    predict,
    sample_marginal,
    update,
)

__version__ = "0.1.0"
