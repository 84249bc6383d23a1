"""Posterior surrogate over the target function.

The model is a generalized linear trend plus a nonparametric residual,
    f(x) = phi(x)' w + eps(x),    eps ~ NP(0, sigma_s^2 (K(theta) + sigma_n^2 I)),
where NP is a Gaussian or Student-t process depending on the hyperprior
placed on (w, sigma_s^2):

  S_GAUSSIAN_PROCESS            w by generalized least squares, sigma_s^2 fixed
  S_GAUSSIAN_PROCESS_NORMAL     conjugate normal inverse-gamma prior on (w, sigma_s^2)
  S_STUDENT_T_PROCESS_JEFFREYS  uninformative prior 1 * sigma_s^-2, Student-t predictive

sigma_s^2 is factored out of the Gram matrix (correlation form), so the
Cholesky factor is reused unchanged when only the signal variance estimate
moves.  Everything query-independent is precomputed at fit/update time;
states are immutable and safe for concurrent read-only queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DimensionMismatch, InsufficientData, InvalidParams, NotPositiveDefinite
from .kernels import KernelSpec, cross_vector, gram, kernel_eval
from .means import MeanSpec, feature_matrix, features

GAUSSIAN_FIXED = "S_GAUSSIAN_PROCESS"
GAUSSIAN_NIG = "S_GAUSSIAN_PROCESS_NORMAL"
STUDENT_T_JEFFREYS = "S_STUDENT_T_PROCESS_JEFFREYS"
SURROGATE_NAMES = (GAUSSIAN_FIXED, GAUSSIAN_NIG, STUDENT_T_JEFFREYS)

_VARIANCE_FLOOR = 1e-12
_SIGMA2_FLOOR = 1e-30


@dataclass(frozen=True)
class NIGPrior:
    """Normal inverse-gamma prior N(w0, sigma_s^2 W) IG(alpha, beta)."""

    w0: np.ndarray
    W: np.ndarray
    alpha: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "w0", np.asarray(self.w0, dtype=float).reshape(-1))
        object.__setattr__(self, "W", np.asarray(self.W, dtype=float))
        m = self.w0.shape[0]
        if self.W.shape != (m, m):
            raise InvalidParams(f"prior dispersion must be {m}x{m}, got {self.W.shape}")
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise InvalidParams("prior needs alpha > 0 and beta > 0")

    @staticmethod
    def flat(m: int, eps: float = 1e-10) -> "NIGPrior":
        """Near-improper prior: vanishing precision on w and an eps-IG on sigma_s^2."""
        return NIGPrior(np.zeros(m), np.eye(m) / eps, eps, eps)

    @staticmethod
    def from_scaled_inv_chi2(w0, W, nu: float, sigma0_2: float) -> "NIGPrior":
        """The normal scaled-inverse-chi-squared parametrization of the same model."""
        return NIGPrior(w0, W, nu / 2.0, nu * sigma0_2 / 2.0)


@dataclass(frozen=True)
class Dataset:
    """Observed points (unit-box coordinates) and responses, with the running incumbent."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise DimensionMismatch(f"X must be (n, d), got {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{X.shape[0]} points but {y.shape[0]} responses")
        if X.shape[0] < 1:
            raise InvalidParams("dataset needs at least one observation")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def incumbent_index(self) -> int:
        return int(np.argmin(self.y))

    @property
    def incumbent(self) -> tuple[np.ndarray, float]:
        i = self.incumbent_index
        return self.X[i], float(self.y[i])

    def append(self, x, y: float) -> "Dataset":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if x.shape[1] != self.dim:
            raise DimensionMismatch(f"point of dimension {x.shape[1]}, data of {self.dim}")
        return Dataset(np.vstack([self.X, x]), np.append(self.y, float(y)))


@dataclass(frozen=True)
class Prediction:
    """Predictive marginal at one query point.

    variance is the squared scale of the marginal; dof is math.inf for a
    Gaussian marginal and finite for a Student-t one.
    """

    mean: float
    variance: float
    dof: float


@dataclass(frozen=True)
class PosteriorState:
    """Everything query-independent, precomputed once per fit/update.

    Immutable; predict and sample_marginal are read-only and safe to call
    from concurrent workers while the optimizer owns the single writer path.
    """

    kind: str
    kernel: KernelSpec
    mean: MeanSpec
    data: Dataset
    sigma_n2: float
    factor: linalg.CholeskyFactor
    Phi: np.ndarray
    w_hat: np.ndarray
    sigma2_hat: float
    dof: float
    Kinv_y_resid: np.ndarray
    Kinv_PhiT: np.ndarray
    gram_w: linalg.CholeskyFactor
    alpha_n: float | None = None
    beta_n: float | None = None
    prior: NIGPrior | None = None
    sigma_s2_fixed: float | None = None


def _factor_with_retry(kernel: KernelSpec, X: np.ndarray, sigma_n2: float):
    """Factorize the correlation matrix, retrying once with a tenfold nugget."""
    try:
        return linalg.factorize(gram(kernel, X, sigma_n2).K), sigma_n2
    except NotPositiveDefinite:
        retry = sigma_n2 * 10.0
        return linalg.factorize(gram(kernel, X, retry).K), retry


def _estimate(kind, kernel, mean, data, sigma_n2, factor, prior, sigma_s2_fixed):
    """Closed-form (w, sigma_s^2) estimates and query-independent products."""
    n = data.n
    Phi = feature_matrix(mean, data.X)
    m = Phi.shape[0]
    y = data.y

    Kinv_y = linalg.solve(factor, y)
    Kinv_PhiT = linalg.solve(factor, Phi.T) if m else np.zeros((n, 0))
    A = Phi @ Kinv_PhiT
    A = 0.5 * (A + A.T)

    alpha_n = beta_n = None
    if kind == GAUSSIAN_NIG:
        Wf = linalg.factorize(prior.W)
        Winv = linalg.solve(Wf, np.eye(m)) if m else np.zeros((0, 0))
        Winv_w0 = Winv @ prior.w0
        M = A + Winv
        gram_w = linalg.factorize(0.5 * (M + M.T))
        w_hat = linalg.solve(gram_w, Phi @ Kinv_y + Winv_w0) if m else np.zeros(0)
        alpha_n = prior.alpha + 0.5 * n
        if alpha_n <= 1.0:
            raise InsufficientData(
                f"posterior-mean signal variance needs alpha + n/2 > 1, got {alpha_n}"
            )
        quad = float(y @ Kinv_y) + float(prior.w0 @ Winv_w0)
        if m:
            quad -= float(w_hat @ (M @ w_hat))
        beta_n = prior.beta + 0.5 * max(quad, 0.0)
        sigma2_hat = max(beta_n / (alpha_n - 1.0), _SIGMA2_FLOOR)
        dof = 2.0 * alpha_n
    else:
        gram_w = linalg.factorize(A)
        w_hat = linalg.solve(gram_w, Phi @ Kinv_y) if m else np.zeros(0)
        if kind == STUDENT_T_JEFFREYS:
            rss = float(y @ (Kinv_y - Kinv_PhiT @ w_hat))
            sigma2_hat = max(rss, 0.0) / (n - m)
            sigma2_hat = max(sigma2_hat, _SIGMA2_FLOOR)
            dof = float(n - m)
        else:
            sigma2_hat = float(sigma_s2_fixed)
            dof = math.inf

    Kinv_y_resid = Kinv_y - Kinv_PhiT @ w_hat
    return PosteriorState(
        kind=kind,
        kernel=kernel,
        mean=mean,
        data=data,
        sigma_n2=sigma_n2,
        factor=factor,
        Phi=Phi,
        w_hat=w_hat,
        sigma2_hat=sigma2_hat,
        dof=dof,
        Kinv_y_resid=Kinv_y_resid,
        Kinv_PhiT=Kinv_PhiT,
        gram_w=gram_w,
        alpha_n=alpha_n,
        beta_n=beta_n,
        prior=prior,
        sigma_s2_fixed=sigma_s2_fixed,
    )


def _check_kind(kind, mean, data, prior, sigma_s2):
    if kind not in SURROGATE_NAMES:
        raise InvalidParams(f"unknown surrogate {kind!r}; expected one of {SURROGATE_NAMES}")
    m = mean.n_features(data.dim)
    if kind == STUDENT_T_JEFFREYS and data.n <= m:
        raise InsufficientData(
            f"Jeffreys surrogate needs n > m; got n={data.n}, m={m}"
        )
    if kind == GAUSSIAN_NIG:
        if prior is None:
            raise InvalidParams("the normal inverse-gamma surrogate requires a prior")
        if prior.w0.shape[0] != m:
            raise InvalidParams(f"prior has {prior.w0.shape[0]} weights, mean has {m}")
    if kind == GAUSSIAN_FIXED and not sigma_s2 > 0.0:
        raise InvalidParams(f"fixed signal variance must be positive, got {sigma_s2}")


def fit(kind: str, kernel: KernelSpec, mean: MeanSpec, data: Dataset,
        sigma_n2: float, prior: NIGPrior | None = None,
        sigma_s2: float = 1.0) -> PosteriorState:
    """Fit the surrogate from scratch (O(n^3) factorization)."""
    mean = mean.bind(data.dim)
    _check_kind(kind, mean, data, prior, sigma_s2)
    factor, eff_nugget = _factor_with_retry(kernel, data.X, sigma_n2)
    return _estimate(kind, kernel, mean, data, eff_nugget, factor, prior, sigma_s2)


def update(state: PosteriorState, x_new, y_new: float) -> PosteriorState:
    """Absorb one observation in O(n^2): extend the factor by one row, then
    recompute the closed-form estimates from the extended factor."""
    return _extend(state, x_new, np.append(state.data.y, float(y_new)))


def update_responses(state: PosteriorState, x_new, y_all) -> PosteriorState:
    """Like update, but the caller supplies the full response vector for the
    extended dataset.  The correlation factor does not depend on responses,
    so rescaled internal responses reuse the same O(n^2) extension."""
    y_all = np.asarray(y_all, dtype=float).reshape(-1)
    if y_all.shape[0] != state.data.n + 1:
        raise DimensionMismatch(
            f"expected {state.data.n + 1} responses, got {y_all.shape[0]}"
        )
    return _extend(state, x_new, y_all)


def _extend(state: PosteriorState, x_new, y_all: np.ndarray) -> PosteriorState:
    x_new = np.asarray(x_new, dtype=float).reshape(1, -1)
    if x_new.shape[1] != state.data.dim:
        raise DimensionMismatch(
            f"point of dimension {x_new.shape[1]}, data of {state.data.dim}"
        )
    data = Dataset(np.vstack([state.data.X, x_new]), y_all)
    k_new = cross_vector(state.kernel, state.data.X, x_new[0])
    self_k = kernel_eval(state.kernel, x_new[0], x_new[0]) + state.sigma_n2
    nugget = state.sigma_n2
    try:
        factor = linalg.add_row(state.factor, np.append(k_new, self_k))
    except NotPositiveDefinite:
        nugget = state.sigma_n2 * 10.0
        factor = linalg.factorize(gram(state.kernel, data.X, nugget).K)
    if state.kind == STUDENT_T_JEFFREYS and data.n <= state.Phi.shape[0]:
        raise InsufficientData("Jeffreys surrogate needs n > m")
    return _estimate(state.kind, state.kernel, state.mean, data, nugget, factor,
                     state.prior, state.sigma_s2_fixed)


def predict(state: PosteriorState, q) -> Prediction:
    """Predictive marginal (mean, squared scale, dof) at one query point."""
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != state.data.dim:
        raise DimensionMismatch(f"query of dimension {q.shape[0]}, data of {state.data.dim}")
    m = state.Phi.shape[0]
    phi_q = features(state.mean, q)
    k_q = cross_vector(state.kernel, state.data.X, q)

    mu = float(phi_q @ state.w_hat) + float(k_q @ state.Kinv_y_resid)

    z = linalg.forward_solve(state.factor, k_q)
    bracket = kernel_eval(state.kernel, q, q) + state.sigma_n2 - float(z @ z)
    if m:
        r = phi_q - state.Kinv_PhiT.T @ k_q
        u = linalg.forward_solve(state.gram_w, r)
        bracket += float(u @ u)
    var = max(state.sigma2_hat * bracket, _VARIANCE_FLOOR)
    return Prediction(mu, var, state.dof)


def sample_marginal(state: PosteriorState, q, rng: np.random.Generator) -> float:
    """One draw from the predictive marginal at q (Gaussian or Student-t)."""
    pred = predict(state, q)
    s = math.sqrt(pred.variance)
    if math.isinf(pred.dof):
        return pred.mean + s * rng.standard_normal()
    return pred.mean + s * rng.standard_t(pred.dof)
