"""Kernel hyperparameter point estimation.

Four derivative-free scores over theta (all "lower is better"), minimized
over a box in log space so positivity comes for free.  Relearning happens
on an infrequent schedule driven by the optimizer loop: updating theta
after every observation is known to bias the search, so theta stays frozen
between scheduled learn calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import InsufficientData, InvalidParams, NoFeasiblePoint, NotPositiveDefinite
from .inneropt import InnerOptimizer, maximize
from .kernels import KernelSpec, gram
from .means import MeanSpec, feature_matrix
from .surrogate import STUDENT_T_JEFFREYS, Dataset, NIGPrior, fit, predict

L_ML = "L_ML"
L_POSTERIOR_ML = "L_POSTERIOR_ML"
L_LOO = "L_LOO"
L_MAP = "L_MAP"
LEARN_NAMES = (L_ML, L_POSTERIOR_ML, L_LOO, L_MAP)

# Default box over log theta, in unit-box input coordinates.  Widths below
# ~3% of the box make the correlation matrix near-diagonal on desk-scale
# datasets; such a fit is indistinguishable from white noise and stalls the
# search, so the lower edge stays above it.
DEFAULT_LOG_LOWER = math.log(0.03)
DEFAULT_LOG_UPPER = math.log(100.0)

_SIGMA2_FLOOR = 1e-30


@dataclass(frozen=True)
class LearnConfig:
    method: str = L_POSTERIOR_ML
    update_every: int = 25  # 0 freezes theta after the first learn
    log_prior_mean: tuple = ()  # MAP only
    log_prior_std: tuple = ()
    log_lower: float = DEFAULT_LOG_LOWER
    log_upper: float = DEFAULT_LOG_UPPER

    def __post_init__(self):
        if self.method not in LEARN_NAMES:
            raise InvalidParams(f"unknown learning type {self.method!r}")
        if self.update_every < 0:
            raise InvalidParams("update_every must be nonnegative")
        if any(s <= 0 for s in self.log_prior_std):
            raise InvalidParams("prior std over log theta must be positive")


def _gls_pieces(theta, data, kernel, mean, sigma_n2):
    """Factor the correlation matrix at theta and profile out (w, sigma_s^2).

    Returns None on factorization failure so callers can soft-reject theta.
    """
    d = data.dim
    bound = kernel.bind(theta, d)
    mean = mean.bind(d)
    Phi = feature_matrix(mean, data.X)
    m, n = Phi.shape
    if n <= m:
        raise InsufficientData(f"scores need n > m; got n={n}, m={m}")
    try:
        factor = linalg.factorize(gram(bound, data.X, sigma_n2).K)
        Kinv_y = linalg.solve(factor, data.y)
        Kinv_PhiT = linalg.solve(factor, Phi.T) if m else np.zeros((n, 0))
        A = Phi @ Kinv_PhiT
        gram_w = linalg.factorize(0.5 * (A + A.T))
        w_hat = linalg.solve(gram_w, Phi @ Kinv_y) if m else np.zeros(0)
    except NotPositiveDefinite:
        return None
    rss = max(float(data.y @ (Kinv_y - Kinv_PhiT @ w_hat)), 0.0)
    sigma2 = max(rss / (n - m), _SIGMA2_FLOOR)
    return factor, gram_w, Kinv_y, Phi, w_hat, sigma2


def score_ml(theta, data: Dataset, kernel: KernelSpec, mean: MeanSpec,
             sigma_n2: float) -> float:
    """Negative log marginal likelihood with (w, sigma_s^2) profiled out:
    (n-m)/2 log sigma_s^2(theta) + 1/2 log|K(theta) + sigma_n^2 I|."""
    pieces = _gls_pieces(theta, data, kernel, mean, sigma_n2)
    if pieces is None:
        return math.inf
    factor, _, _, Phi, _, sigma2 = pieces
    n, m = data.n, Phi.shape[0]
    return 0.5 * (n - m) * math.log(sigma2) + 0.5 * factor.logdet()


def score_posterior_ml(theta, data: Dataset, kernel: KernelSpec, mean: MeanSpec,
                       sigma_n2: float, prior: NIGPrior | None = None) -> float:
    """Negative log marginal with w (and sigma_s^2) integrated out.

    Without a prior this is the Jeffreys Student-t form, which differs from
    score_ml exactly by the 1/2 log|Phi K^-1 Phi'| term; with a normal
    inverse-gamma prior the posterior updates replace the flat-prior terms.
    """
    if prior is None:
        pieces = _gls_pieces(theta, data, kernel, mean, sigma_n2)
        if pieces is None:
            return math.inf
        factor, gram_w, _, Phi, _, sigma2 = pieces
        n, m = data.n, Phi.shape[0]
        return (0.5 * (n - m) * math.log(sigma2) + 0.5 * factor.logdet()
                + 0.5 * gram_w.logdet())

    d = data.dim
    bound = kernel.bind(theta, d)
    mean = mean.bind(d)
    Phi = feature_matrix(mean, data.X)
    m, n = Phi.shape
    try:
        factor = linalg.factorize(gram(bound, data.X, sigma_n2).K)
        Kinv_y = linalg.solve(factor, data.y)
        Kinv_PhiT = linalg.solve(factor, Phi.T) if m else np.zeros((n, 0))
        A = Phi @ Kinv_PhiT
        Wf = linalg.factorize(prior.W)
        Winv = linalg.solve(Wf, np.eye(m)) if m else np.zeros((0, 0))
        M = A + Winv
        gram_w = linalg.factorize(0.5 * (M + M.T))
        w_hat = linalg.solve(gram_w, Phi @ Kinv_y + Winv @ prior.w0) if m else np.zeros(0)
    except NotPositiveDefinite:
        return math.inf
    quad = float(data.y @ Kinv_y) + float(prior.w0 @ (Winv @ prior.w0))
    if m:
        quad -= float(w_hat @ (M @ w_hat))
    alpha_n = prior.alpha + 0.5 * n
    beta_n = prior.beta + 0.5 * max(quad, 0.0)
    return alpha_n * math.log(beta_n) + 0.5 * factor.logdet() + 0.5 * gram_w.logdet()


def _t_logpdf(x, mu, scale2, dof):
    z2 = (x - mu) ** 2 / (dof * scale2)
    return (math.lgamma(0.5 * (dof + 1.0)) - math.lgamma(0.5 * dof)
            - 0.5 * math.log(dof * math.pi * scale2)
            - 0.5 * (dof + 1.0) * math.log1p(z2))


def score_loo(theta, data: Dataset, kernel: KernelSpec, mean: MeanSpec,
              sigma_n2: float) -> float:
    """Negative average leave-one-out predictive log density.

    Naive n-refit implementation; n is small by design in this library.
    Each fold is a Jeffreys fit to the other n-1 points, so the held-out
    density is Student-t.
    """
    n = data.n
    mean = mean.bind(data.dim)
    m = mean.n_features(data.dim)
    if n - 1 <= m:
        raise InsufficientData(f"leave-one-out needs n - 1 > m; got n={n}, m={m}")
    bound = kernel.bind(theta, data.dim)
    total = 0.0
    for i in range(n):
        keep = np.arange(n) != i
        fold = Dataset(data.X[keep], data.y[keep])
        try:
            state = fit(STUDENT_T_JEFFREYS, bound, mean, fold, sigma_n2)
        except NotPositiveDefinite:
            return math.inf
        pred = predict(state, data.X[i])
        total += _t_logpdf(float(data.y[i]), pred.mean, pred.variance, pred.dof)
    return -total / n


def score_map(theta, data: Dataset, kernel: KernelSpec, mean: MeanSpec,
              sigma_n2: float, log_prior_mean, log_prior_std,
              prior: NIGPrior | None = None) -> float:
    """score_posterior_ml plus a log-normal penalty on theta."""
    base = score_posterior_ml(theta, data, kernel, mean, sigma_n2, prior)
    if math.isinf(base):
        return base
    log_t = np.log(np.asarray(theta, dtype=float))
    mu = np.asarray(log_prior_mean, dtype=float)
    sd = np.asarray(log_prior_std, dtype=float)
    return base + float(np.sum((log_t - mu) ** 2 / (2.0 * sd**2)))


def learn(config: LearnConfig, data: Dataset, kernel: KernelSpec, mean: MeanSpec,
          sigma_n2: float, inner: InnerOptimizer,
          prior: NIGPrior | None = None) -> np.ndarray:
    """Minimize the configured score over the log-theta box.

    Never fails hard: if every probe is rejected, the incoming theta
    (clipped into the box) is returned unchanged.
    """
    n_hp = kernel.n_hyperparameters(data.dim)
    lo = np.full(n_hp, config.log_lower)
    hi = np.full(n_hp, config.log_upper)

    if config.method == L_ML:
        score = lambda t: score_ml(t, data, kernel, mean, sigma_n2)
    elif config.method == L_POSTERIOR_ML:
        score = lambda t: score_posterior_ml(t, data, kernel, mean, sigma_n2, prior)
    elif config.method == L_LOO:
        score = lambda t: score_loo(t, data, kernel, mean, sigma_n2)
    else:
        mu = np.asarray(config.log_prior_mean, dtype=float)
        sd = np.asarray(config.log_prior_std, dtype=float)
        if mu.shape[0] != n_hp or sd.shape[0] != n_hp:
            raise InvalidParams(
                f"MAP prior needs {n_hp} entries, got {mu.shape[0]}/{sd.shape[0]}"
            )
        score = lambda t: score_map(t, data, kernel, mean, sigma_n2, mu, sd, prior)

    def objective(log_theta):
        return -score(np.exp(log_theta))

    try:
        best_log, _ = maximize(objective, lo, hi, inner)
    except NoFeasiblePoint:
        fallback = kernel.theta_flat()
        if fallback.shape[0] != n_hp:
            fallback = np.exp(0.5 * (lo + hi))
        return np.exp(np.clip(np.log(fallback), lo, hi))
    return np.exp(best_log)
