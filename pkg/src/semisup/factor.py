"""Empirical-factor regression and a Bayesian probit on factor scores.

The factor model is

    y_i = alpha' lambda_i + eps_i,   x_i = B lambda_i + nu_i,
    lambda_i ~ N(0, I_k),  eps_i ~ N(0, sigma2),  nu_i ~ N(0, Psi),

so the x-marginal has covariance ``B B' + Psi`` and shares ``B`` with the
regression. In practice ``B`` is replaced by the leading right-singular
directions of the centered design; rows without labels still sharpen those
directions, which is how unlabeled data enters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

from . import stochastics as st
from .errors import InvalidDataError, InvalidParameterError, SingularSystemError

_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class FactorModel:
    B: np.ndarray
    psi: np.ndarray
    alpha: np.ndarray
    sigma2: float

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float))
        if psi.ndim == 2:
            psi = np.diag(psi).copy()
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        p, k = B.shape
        if psi.shape != (p,) or np.any(psi <= 0):
            raise InvalidParameterError("psi must be a positive p-vector")
        if alpha.shape != (k,):
            raise InvalidParameterError("alpha must have one entry per factor")
        if k > p:
            raise InvalidParameterError("more factors than variables")
        if not float(self.sigma2) > 0:
            raise InvalidParameterError("sigma2 must be positive")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma2", float(self.sigma2))


@dataclass(frozen=True)
class EmpiricalFactors:
    center: np.ndarray
    projection: np.ndarray
    singular_values: np.ndarray

    @property
    def k(self) -> int:
        return self.projection.shape[1]


def implied_x_marginal(model: FactorModel) -> np.ndarray:
    """Covariance ``B B' + Psi`` of the design rows."""
    return model.B @ model.B.T + np.diag(model.psi)


def simulate_factor_data(model: FactorModel, n: int, rng, binary: bool = False):
    """Draw ``(y, X)`` from the factor model.

    With ``binary=True`` the response is ``1{alpha' lambda + eps > 0}``, a
    probit link on the factor scores.
    """
    if n < 1:
        raise InvalidParameterError("n must be at least 1")
    p, k = model.B.shape
    lam = rng.standard_normal((n, k))
    eps = rng.standard_normal(n) * np.sqrt(model.sigma2)
    nu = rng.standard_normal((n, p)) * np.sqrt(model.psi)
    y = lam @ model.alpha + eps
    x = lam @ model.B.T + nu
    if binary:
        y = (y > 0).astype(int)
    return y, x


def compute_empirical_factors(design_rows, k: int = 2) -> EmpiricalFactors:
    """Leading ``k`` right-singular directions of the centered rows.

    The center is the mean of exactly the rows given. When ``k`` exceeds the
    numerical rank it is reduced with a warning.
    """
    x = np.asarray(design_rows, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidDataError("need a matrix with at least two rows")
    if k < 1:
        raise InvalidParameterError("k must be positive")
    center = x.mean(axis=0)
    z = x - center
    _, s, vt = np.linalg.svd(z, full_matrices=False)
    rank = int(np.sum(s > _RANK_RTOL * max(s[0], np.finfo(float).tiny))) if s.size else 0
    if k > rank:
        warnings.warn(f"requested {k} factors but the centered design has rank {rank}; using {rank}", stacklevel=2)
        k = rank
    if k < 1:
        raise InvalidDataError("centered design has rank 0")
    return EmpiricalFactors(center, vt[:k].T.copy(), s[:k].copy())


def project(factors: EmpiricalFactors, x) -> np.ndarray:
    """Factor scores ``(x - center)' V``; accepts a vector or rows."""
    x = np.asarray(x, dtype=float)
    return (x - factors.center) @ factors.projection


def flip_signs(factors: EmpiricalFactors, signs) -> EmpiricalFactors:
    signs = np.asarray(signs, dtype=float)
    return EmpiricalFactors(factors.center, factors.projection * signs, factors.singular_values)


# --------------------------------------------------------------------------
# Probit regression


@dataclass(frozen=True)
class ProbitPrior:
    """``beta ~ N(0, g * n * (X'X)^{-1})`` on ``(intercept, coefficients)``.

    ``X`` holds the rows that define the prior's Gram structure: by default the
    labeled scores, or every row the factors were computed from. The
    unit-information g-prior keeps the posterior proper under separation,
    which is routine with two labeled cases per class.
    """

    g: float = 4.0
    jitter: float = 1e-8

    def __post_init__(self):
        if not self.g > 0:
            raise InvalidParameterError("prior scale must be positive")


@dataclass(frozen=True)
class ProbitFit:
    coefficients: np.ndarray  # (n_keep, k + 1), intercept first
    prior: ProbitPrior = field(default_factory=ProbitPrior)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        if c.shape[0] == 0:
            raise InvalidParameterError("a probit fit needs at least one draw")
        object.__setattr__(self, "coefficients", c)

    @property
    def posterior_mean(self) -> np.ndarray:
        return self.coefficients.mean(axis=0)


def _with_intercept(scores: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(scores)), scores])


def _orientation(scores: np.ndarray) -> np.ndarray:
    """Sign per column that flips with the column (first clearly nonzero entry made positive)."""
    signs = np.ones(scores.shape[1])
    for j in range(scores.shape[1]):
        col = scores[:, j]
        tol = 1e-12 * max(np.max(np.abs(col)), np.finfo(float).tiny)
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size and col[nz[0]] < 0:
            signs[j] = -1.0
    return signs


def probit_gibbs(design, labels, prior_precision, n_burn: int, n_keep: int, rng, thin: int = 1) -> np.ndarray:
    """Albert-Chib sampler for ``Pr(y = 1) = Phi(design @ beta)``, ``beta ~ N(0, prior_precision^{-1})``.

    Returns an ``(n_keep, dim)`` array of retained draws.
    """
    x = np.asarray(design, dtype=float)
    positive = np.asarray(labels).astype(int) == 1
    if n_keep < 1 or thin < 1 or n_burn < 0:
        raise InvalidParameterError("need n_keep >= 1, thin >= 1, n_burn >= 0")
    post_prec = x.T @ x + prior_precision
    try:
        chol = np.linalg.cholesky(0.5 * (post_prec + post_prec.T))
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("posterior precision is not positive definite") from exc
    beta = np.zeros(x.shape[1])
    draws = np.empty((n_keep, x.shape[1]))
    total = n_burn + n_keep * thin
    for it in range(total):
        z = st.sample_truncated_normal(x @ beta, 1.0, positive, rng)
        mean = linalg.cho_solve((chol, True), x.T @ z)
        # mean + L^{-T} e has covariance post_prec^{-1}
        beta = mean + linalg.solve_triangular(chol.T, rng.standard_normal(x.shape[1]), lower=False)
        kept = it - n_burn
        if kept >= 0 and kept % thin == 0:
            draws[kept // thin] = beta
    return draws


def probit_mcmc(scores, labels, prior_scale: float = 4.0, n_burn: int = 500, n_keep: int = 1000,
                rng=None, thin: int = 1, prior_rows=None) -> ProbitFit:
    """Latent-variable Gibbs sampler for probit regression with an intercept.

    Alternates ``z_i | beta`` (normal truncated to the side given by the
    label) and ``beta | z`` (conjugate normal). Sampling runs in a canonical
    orientation of the score columns so the returned fit is exactly
    equivariant under sign flips of any column.
    """
    if rng is None:
        raise InvalidParameterError("an explicit rng is required")
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    y = np.asarray(labels).astype(int).ravel()
    n = len(y)
    if scores.shape[0] != n:
        raise InvalidDataError("scores and labels have different lengths")
    if n < 2 or not set(np.unique(y)) <= {0, 1}:
        raise InvalidDataError("labels must be binary with at least two cases")
    if len(np.unique(y)) < 2:
        raise InvalidDataError("both classes must be present among the labels")
    prior = ProbitPrior(g=float(prior_scale))
    signs = _orientation(scores)
    x = _with_intercept(scores * signs)
    xtx = x.T @ x
    if prior_rows is None:
        gram, n_gram = xtx, n
    else:
        pr = _with_intercept(np.asarray(prior_rows, dtype=float).reshape(-1, scores.shape[1]) * signs)
        gram, n_gram = pr.T @ pr, len(pr)
    ridge = prior.jitter * max(np.trace(gram), 1.0) * np.eye(x.shape[1])
    prior_prec = (gram + ridge) / (prior.g * n_gram)
    draws = probit_gibbs(x, y, prior_prec, n_burn, n_keep, rng, thin)
    coef = draws.copy()
    coef[:, 1:] *= signs
    return ProbitFit(coef, prior)


def predict_probit(fit: ProbitFit, score) -> float | np.ndarray:
    """Posterior predictive ``Pr(y = 1)``: the average of ``Phi(b0 + b' s)`` over draws.

    ``score`` may be a k-vector or an ``(m, k)`` matrix.
    """
    s = np.asarray(score, dtype=float)
    single = s.ndim <= 1
    s2 = np.atleast_2d(s.reshape(1, -1) if single else s)
    eta = fit.coefficients[:, :1].T + s2 @ fit.coefficients[:, 1:].T  # (m, draws)
    prob = special.ndtr(eta).mean(axis=1)
    return float(prob[0]) if single else prob


def classification_errors(prob_one, labels) -> np.ndarray:
    """1 where the predictive probability of the true label is at most 0.5."""
    prob_one = np.asarray(prob_one, dtype=float)
    labels = np.asarray(labels).astype(int)
    p_true = np.where(labels == 1, prob_one, 1.0 - prob_one)
    return (p_true <= 0.5).astype(int)


@dataclass(frozen=True)
class FactorComparison:
    labeled_only_error: float
    semisupervised_error: float


def factor_probit_pipeline(train_x, train_y, labeled_idx, test_x, test_y, k: int, use_unlabeled: bool,
                           rng, prior_scale: float = 4.0, n_burn: int = 300, n_keep: int = 600,
                           sign_flips=None) -> float:
    """Fit factors (labeled rows or the whole pool), fit the probit on labeled scores, return test error."""
    train_x = np.asarray(train_x, dtype=float)
    labeled_idx = np.asarray(labeled_idx, dtype=int)
    rows = train_x if use_unlabeled else train_x[labeled_idx]
    factors = compute_empirical_factors(rows, k)
    if sign_flips is not None:
        factors = flip_signs(factors, np.asarray(sign_flips)[: factors.k])
    fit = probit_mcmc(project(factors, train_x[labeled_idx]), np.asarray(train_y)[labeled_idx],
                      prior_scale, n_burn, n_keep, rng, prior_rows=project(factors, rows))
    prob = predict_probit(fit, project(factors, test_x))
    return float(classification_errors(prob, test_y).mean())


def compare_factor_arms(train_x, train_y, labeled_idx, test_x, test_y, k: int, rng_lab, rng_semi,
                        **kw) -> FactorComparison:
    lab = factor_probit_pipeline(train_x, train_y, labeled_idx, test_x, test_y, k, False, rng_lab, **kw)
    semi = factor_probit_pipeline(train_x, train_y, labeled_idx, test_x, test_y, k, True, rng_semi, **kw)
    return FactorComparison(lab, semi)


def draw_balanced_labels(labels, per_class: int, rng) -> np.ndarray:
    """Indices of ``per_class`` random cases from each class, sorted."""
    labels = np.asarray(labels).astype(int)
    picks = []
    for c in (0, 1):
        pool = np.flatnonzero(labels == c)
        if len(pool) < per_class:
            raise InvalidDataError(f"class {c} has fewer than {per_class} cases")
        picks.append(rng.choice(pool, per_class, replace=False))
    return np.sort(np.concatenate(picks))
