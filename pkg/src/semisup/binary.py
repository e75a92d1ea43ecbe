"""Posterior prediction for a binary covariate and binary outcome.

Cells ``pi = (pi00, pi01, pi10, pi11)`` are indexed ``pi_xy``. The
prospective parameters are

    theta = Pr(x = 1) = pi10 + pi11
    phi_x = Pr(y = 1 | x) = pi_x1 / (pi_x0 + pi_x1)

Three prior families are supported: independent Betas on ``(phi0, phi1,
theta)``, a single Dirichlet on the cells, and a two-component Dirichlet
mixture ``a Dir(dir0) + (1 - a) Dir(dir1)``. Only the mixture couples ``phi``
to ``theta``; under it unlabeled x counts shift the posterior mixture weight.

The mixture's conditional weight uses the density ratio of the two induced
Beta marginals of ``theta``:

    w(theta) / (1 - w(theta)) = a / (1 - a) * p0(theta) / p1(theta)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import dcor
from .errors import InvalidParameterError, NumericalFailure

EXPANSION_CAP = 64


@dataclass(frozen=True)
class ProductBeta:
    """Independent ``phi0 ~ Beta(*phi0)``, ``phi1 ~ Beta(*phi1)``, ``theta ~ Beta(*theta)``."""

    phi0: tuple[float, float] = (1.0, 1.0)
    phi1: tuple[float, float] = (1.0, 1.0)
    theta: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        for name in ("phi0", "phi1", "theta"):
            v = tuple(float(t) for t in getattr(self, name))
            if len(v) != 2 or min(v) <= 0:
                raise InvalidParameterError(f"{name} needs two positive Beta parameters")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class Dirichlet:
    """``Dir(alpha00, alpha01, alpha10, alpha11)`` on the cells."""

    alpha: tuple[float, float, float, float]

    def __post_init__(self):
        v = tuple(float(t) for t in self.alpha)
        if len(v) != 4 or min(v) <= 0:
            raise InvalidParameterError("Dirichlet needs four positive concentrations")
        object.__setattr__(self, "alpha", v)


@dataclass(frozen=True)
class DirichletMixture:
    a: float
    dir0: tuple[float, float, float, float]
    dir1: tuple[float, float, float, float]

    def __post_init__(self):
        if not 0.0 < float(self.a) < 1.0:
            raise InvalidParameterError("mixture weight a must lie in (0, 1)")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "dir0", Dirichlet(self.dir0).alpha)
        object.__setattr__(self, "dir1", Dirichlet(self.dir1).alpha)


CellPrior = ProductBeta | Dirichlet | DirichletMixture


@dataclass(frozen=True)
class CountData:
    """Labeled counts ``n[x][y]`` and unlabeled counts ``m[x]``."""

    labeled: tuple[tuple[int, int], tuple[int, int]] = ((0, 0), (0, 0))
    unlabeled: tuple[int, int] = (0, 0)

    def __post_init__(self):
        lab = tuple(tuple(int(v) for v in row) for row in self.labeled)
        unl = tuple(int(v) for v in self.unlabeled)
        if len(lab) != 2 or any(len(r) != 2 for r in lab) or len(unl) != 2:
            raise InvalidParameterError("labeled counts are 2x2 and unlabeled counts have length 2")
        if min(min(r) for r in lab) < 0 or min(unl) < 0:
            raise InvalidParameterError("counts must be nonnegative")
        object.__setattr__(self, "labeled", lab)
        object.__setattr__(self, "unlabeled", unl)

    @property
    def cells(self) -> np.ndarray:
        """Labeled counts in cell order ``(00, 01, 10, 11)``."""
        return np.array([self.labeled[0][0], self.labeled[0][1], self.labeled[1][0], self.labeled[1][1]], dtype=float)


@dataclass(frozen=True)
class Prediction:
    p_star: float
    method: str
    diagnostics: dict | None = None


def _check_x(x_star):
    if x_star not in (0, 1):
        raise InvalidParameterError("x_star must be 0 or 1")


def _dirichlet_phi_mean(alpha, x_star) -> float:
    a0, a1 = alpha[2 * x_star], alpha[2 * x_star + 1]
    return a1 / (a0 + a1)


def posterior_predictive(prior: CellPrior, data: CountData, x_star: int,
                         expansion_cap: int = EXPANSION_CAP) -> Prediction:
    """``Pr(y* = 1 | x*, D)`` with the method used (``closed-form``, ``exact`` or ``quadrature``)."""
    _check_x(x_star)
    n = data.labeled
    if isinstance(prior, ProductBeta):
        a, b = prior.phi1 if x_star else prior.phi0
        s, f = n[x_star][1], n[x_star][0]
        return Prediction((a + s) / (a + b + s + f), "closed-form")
    if isinstance(prior, Dirichlet):
        post = np.asarray(prior.alpha) + data.cells
        return Prediction(_dirichlet_phi_mean(post, x_star), "closed-form")
    if isinstance(prior, DirichletMixture):
        m0, m1 = data.unlabeled
        if m0 + m1 <= expansion_cap:
            return Prediction(_mixture_expansion(prior, data, x_star), "exact")
        value, diag = _mixture_quadrature(prior, data, x_star)
        return Prediction(value, "quadrature", diag)
    raise InvalidParameterError(f"unsupported prior {type(prior).__name__}")


def _log_dirichlet_norm(alpha) -> float:
    alpha = np.asarray(alpha, dtype=float)
    return float(np.sum(special.gammaln(alpha)) - special.gammaln(alpha.sum()))


def _mixture_expansion(prior: DirichletMixture, data: CountData, x_star: int) -> float:
    """Expand ``(pi10 + pi11)^m1 (pi00 + pi01)^m0`` binomially into Dirichlet terms."""
    m0, m1 = data.unlabeled
    cells = data.cells
    logw, means = [], []
    j = np.arange(m0 + 1)
    k = np.arange(m1 + 1)
    log_c0 = special.gammaln(m0 + 1) - special.gammaln(j + 1) - special.gammaln(m0 - j + 1)
    log_c1 = special.gammaln(m1 + 1) - special.gammaln(k + 1) - special.gammaln(m1 - k + 1)
    for weight, alpha in ((prior.a, prior.dir0), (1.0 - prior.a, prior.dir1)):
        alpha = np.asarray(alpha)
        base = alpha + cells
        log_prior_norm = _log_dirichlet_norm(alpha)
        jj, kk = np.meshgrid(j, k, indexing="ij")
        # term exponents added to cells (00, 01, 10, 11)
        post = np.stack([base[0] + jj, base[1] + (m0 - jj), base[2] + kk, base[3] + (m1 - kk)], axis=-1)
        log_norm = np.sum(special.gammaln(post), axis=-1) - special.gammaln(post.sum(axis=-1))
        lw = math.log(weight) + log_c0[:, None] + log_c1[None, :] + log_norm - log_prior_norm
        a0, a1 = post[..., 2 * x_star], post[..., 2 * x_star + 1]
        logw.append(lw.ravel())
        means.append((a1 / (a0 + a1)).ravel())
    logw = np.concatenate(logw)
    means = np.concatenate(means)
    w = np.exp(logw - special.logsumexp(logw))
    return float(np.sum(w * means) / np.sum(w))


# --------------------------------------------------------------------------
# Deterministic quadrature


def _tanh_sinh_log(log_f, max_level: int = 12, rtol: float = 1e-13):
    """Integrate ``exp(log_f(t, 1 - t))`` over (0, 1) by tanh-sinh with step halving.

    ``log_f`` receives ``t`` and ``1 - t`` computed without cancellation so
    endpoint singularities are handled. Returns ``(log_integral, levels, rel_change)``.
    """
    h = 1.0
    prev = None
    rel = math.inf
    for level in range(max_level + 1):
        n_side = int(math.ceil(4.0 / h))
        kk = np.arange(-n_side, n_side + 1)
        if level > 0:
            kk = kk[kk % 2 != 0]
        s = kk * h
        u = 0.5 * math.pi * np.sinh(s)
        # t = (1 + tanh(u)) / 2 and 1 - t = (1 - tanh(u)) / 2 via exp(-2|u|)
        e = np.exp(-2.0 * np.abs(u))
        small = e / (1.0 + e)
        t = np.where(u < 0, small, 1.0 - small)
        one_minus_t = np.where(u < 0, 1.0 - small, small)
        log_w = math.log(0.5 * math.pi) + np.log(np.cosh(s)) - 2.0 * np.log(np.cosh(u)) - math.log(2.0)
        ok = (t > 0) & (one_minus_t > 0) & np.isfinite(log_w)
        terms = log_f(t[ok], one_minus_t[ok]) + log_w[ok]
        lsum = special.logsumexp(terms) if terms.size else -np.inf
        if level == 0:
            acc = lsum + math.log(h)
        else:
            # halving the step keeps the old nodes and adds the odd ones
            acc = np.logaddexp(prev - math.log(2.0), lsum + math.log(h))
        if prev is not None:
            rel = abs(math.expm1(acc - prev))
            if rel < rtol:
                return acc, level, rel
        prev = acc
        h /= 2.0
    return prev, max_level, rel


def _log_beta_integral(a: float, b: float):
    """``log int_0^1 t^(a-1) (1-t)^(b-1) dt`` by quadrature."""
    return _tanh_sinh_log(lambda t, u: (a - 1.0) * np.log(t) + (b - 1.0) * np.log(u))


def _mixture_quadrature(prior: DirichletMixture, data: CountData, x_star: int, tol: float = 1e-6):
    """Integrate over ``(theta, phi0, phi1)``, in which each Dirichlet is a product of Betas.

    Each component's posterior mass and ``phi_{x*}`` moment are products of
    one-dimensional integrals, each evaluated by nested tanh-sinh refinement.
    """
    m0, m1 = data.unlabeled
    n = data.labeled
    log_mass, log_moment = [], []
    worst = 0.0
    for weight, alpha in ((prior.a, prior.dir0), (1.0 - prior.a, prior.dir1)):
        a00, a01, a10, a11 = alpha
        # prior normalizers (Beta functions of the induced marginals)
        log_norm_prior = (special.betaln(a10 + a11, a00 + a01) + special.betaln(a11, a10) + special.betaln(a01, a00))
        t_a = a10 + a11 + n[1][0] + n[1][1] + m1
        t_b = a00 + a01 + n[0][0] + n[0][1] + m0
        p1 = (a11 + n[1][1], a10 + n[1][0])
        p0 = (a01 + n[0][1], a00 + n[0][0])
        parts = [_log_beta_integral(t_a, t_b), _log_beta_integral(*p1), _log_beta_integral(*p0)]
        px = p1 if x_star else p0
        mom = _log_beta_integral(px[0] + 1.0, px[1])
        for val, _, rel in parts + [mom]:
            worst = max(worst, rel)
        lm = math.log(weight) + sum(v for v, _, _ in parts) - log_norm_prior
        idx = 1 if x_star else 2
        log_mass.append(lm)
        log_moment.append(lm - parts[idx][0] + mom[0])
    if worst > tol:
        raise NumericalFailure("simplex quadrature did not converge", {"relative_change": worst, "tolerance": tol})
    value = math.exp(special.logsumexp(log_moment) - special.logsumexp(log_mass))
    return value, {"max_relative_change": worst}


# --------------------------------------------------------------------------
# Mixture weight and independence diagnostics


def theta_marginal(alpha) -> tuple[float, float]:
    """Beta parameters of ``theta = pi10 + pi11`` under ``Dir(alpha)``."""
    a00, a01, a10, a11 = alpha
    return a10 + a11, a00 + a01


def conditional_prior_weight(prior: DirichletMixture, theta: float) -> float:
    """Weight of ``dir0`` in ``p(phi | theta)`` under the mixture prior."""
    if not 0.0 < theta < 1.0:
        raise InvalidParameterError("theta must lie strictly inside (0, 1)")
    l0 = stats.beta.logpdf(theta, *theta_marginal(prior.dir0))
    l1 = stats.beta.logpdf(theta, *theta_marginal(prior.dir1))
    log_odds = math.log(prior.a) - math.log1p(-prior.a) + l0 - l1
    return float(special.expit(log_odds))


def cells_to_prospective(pi: np.ndarray) -> np.ndarray:
    """Map cell draws ``(n, 4)`` to columns ``(phi0, phi1, theta)``."""
    pi = np.atleast_2d(pi)
    theta = pi[:, 2] + pi[:, 3]
    phi1 = pi[:, 3] / theta
    phi0 = pi[:, 1] / (pi[:, 0] + pi[:, 1])
    return np.column_stack([phi0, phi1, theta])


def sample_cells(prior: Dirichlet | DirichletMixture, n: int, rng) -> np.ndarray:
    if isinstance(prior, Dirichlet):
        return rng.dirichlet(prior.alpha, size=n)
    comp = rng.random(n) < prior.a
    out = np.empty((n, 4))
    out[comp] = rng.dirichlet(prior.dir0, size=int(comp.sum()))
    out[~comp] = rng.dirichlet(prior.dir1, size=int((~comp).sum()))
    return out


def dirichlet_phi_theta_independence_check(prior, n_draws: int, rng, n_permutations: int = 99,
                                           block_size: int = 500) -> dcor.IndependenceResult:
    """Distance-correlation permutation test of ``theta`` against ``(phi0, phi1)``.

    ``prior`` may be a concentration 4-vector, a :class:`Dirichlet` or a
    :class:`DirichletMixture`.
    """
    if n_draws < 10_000:
        raise InvalidParameterError("n_draws must be at least 10^4")
    if not isinstance(prior, (Dirichlet, DirichletMixture)):
        prior = Dirichlet(tuple(prior))
    pros = cells_to_prospective(sample_cells(prior, n_draws, rng))
    return dcor.permutation_dcor_test(pros[:, 2], pros[:, :2], rng, n_permutations, block_size)


def prior_to_dict(prior: CellPrior) -> dict:
    if isinstance(prior, ProductBeta):
        return {"type": "product-beta", "phi0": list(prior.phi0), "phi1": list(prior.phi1), "theta": list(prior.theta)}
    if isinstance(prior, Dirichlet):
        return {"type": "dirichlet", "alpha": list(prior.alpha)}
    return {"type": "dirichlet-mixture", "a": prior.a, "dir0": list(prior.dir0), "dir1": list(prior.dir1)}


def prior_from_dict(doc: dict) -> CellPrior:
    kind = doc.get("type")
    if kind == "product-beta":
        return ProductBeta(tuple(doc.get("phi0", (1, 1))), tuple(doc.get("phi1", (1, 1))), tuple(doc.get("theta", (1, 1))))
    if kind == "dirichlet":
        return Dirichlet(tuple(doc["alpha"]))
    if kind == "dirichlet-mixture":
        return DirichletMixture(doc["a"], tuple(doc["dir0"]), tuple(doc["dir1"]))
    raise InvalidParameterError(f"unknown prior type {kind!r}")
