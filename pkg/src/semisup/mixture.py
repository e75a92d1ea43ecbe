"""Gaussian mixture joint models for (y, x) with unlabeled covariates.

Two parameterizations share one Gibbs sampler:

* ``"regression"``: each component is a normal over the joint vector
  ``z = (y, x)``; unlabeled rows have their ``y`` imputed as missing data.
* ``"discriminant"``: two components over ``x`` alone, component ``k`` is the
  class-``k`` density and ``weights[1]`` is ``Pr(y = 1)``. Labeled rows have
  their allocation fixed at the label.

Prior (normal-inverse-Wishart per component, Dirichlet on weights)::

    weights ~ Dir(alpha)
    mu_k | Sigma_k ~ N(0, tau * Sigma_k)
    Sigma_k ~ IW(dof, S0)          # convention documented in stochastics

Predictive summaries are Rao-Blackwellized averages over parameter draws and
are computed in log space. Per-component contributions are summed in sorted
order so that relabeling components leaves results bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from . import stochastics as st
from .errors import InvalidDataError, InvalidParameterError

MODES = ("regression", "discriminant")

_LOG_2PI = np.log(2.0 * np.pi)


# --------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class GaussianComponent:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma, _ = st.as_spd(self.sigma, "component covariance")
        if sigma.shape[0] != mu.size:
            raise InvalidParameterError("component mean and covariance dims differ")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class MixtureParams:
    """Mixture weights plus stacked component means ``(m, d)`` and covariances ``(m, d, d)``.

    ``n_response`` is 1 when components live on the joint ``(y, x)`` space and
    0 when they describe ``x`` alone (discriminant mode).
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    n_response: int = 1

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covs, dtype=float).reshape(means.shape[0], means.shape[1], means.shape[1])
        if w.ndim != 1 or w.size != means.shape[0] or w.size < 1:
            raise InvalidParameterError("weights must be a vector with one entry per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidParameterError("weights must lie on the simplex")
        if self.n_response not in (0, 1):
            raise InvalidParameterError("n_response must be 0 or 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)

    @classmethod
    def from_components(cls, weights, components: Sequence[GaussianComponent], n_response: int = 1):
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise InvalidParameterError("all components must share a dimension")
        return cls(
            np.asarray(weights, dtype=float),
            np.stack([c.mu for c in components]),
            np.stack([c.sigma for c in components]),
            n_response,
        )

    @property
    def m(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(mu, s) for mu, s in zip(self.means, self.covs)]

    def permuted(self, order) -> "MixtureParams":
        order = np.asarray(order)
        return MixtureParams(self.weights[order], self.means[order], self.covs[order], self.n_response)


@dataclass(frozen=True)
class NIWMixturePrior:
    dirichlet_alpha: np.ndarray
    tau: float
    iw_dof: float
    iw_scale: np.ndarray
    iw_convention: str = "standard"

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.dirichlet_alpha, dtype=float))
        if np.any(alpha <= 0):
            raise InvalidParameterError("Dirichlet concentrations must be positive")
        if not self.tau > 0:
            raise InvalidParameterError("tau must be positive")
        scale, _ = st.as_spd(self.iw_scale, "IW scale")
        nu = st.standard_iw_dof(self.iw_dof, scale.shape[0], self.iw_convention)
        if not nu > scale.shape[0] - 1:
            raise InvalidParameterError(f"IW dof {nu} too small for dimension {scale.shape[0]}")
        object.__setattr__(self, "dirichlet_alpha", alpha)
        object.__setattr__(self, "iw_scale", scale)

    @classmethod
    def reference_default(cls, m: int = 3, dim: int = 2, iw_convention: str = "standard"):
        """Dir(1/m, ...), tau = 0.2, IW(3, (4/3) I)."""
        return cls(np.full(m, 1.0 / m), 0.2, 3.0, (4.0 / 3.0) * np.eye(dim), iw_convention)

    @property
    def m(self) -> int:
        return self.dirichlet_alpha.size

    @property
    def dim(self) -> int:
        return self.iw_scale.shape[0]

    @property
    def standard_dof(self) -> float:
        return st.standard_iw_dof(self.iw_dof, self.dim, self.iw_convention)

    def sample_component(self, rng) -> tuple[np.ndarray, np.ndarray]:
        return niw_posterior_draw(self, np.empty((0, self.dim)), rng)

    def sample(self, rng, n_response: int = 1) -> MixtureParams:
        w = st.sample_dirichlet(self.dirichlet_alpha, rng)
        draws = [self.sample_component(rng) for _ in range(self.m)]
        return MixtureParams(w, np.stack([d[0] for d in draws]), np.stack([d[1] for d in draws]), n_response)


@dataclass(frozen=True)
class SemiSupDataset:
    """Labeled pairs and unlabeled covariates.

    In discriminant mode ``labeled_y`` holds integer class labels.
    """

    labeled_y: np.ndarray
    labeled_x: np.ndarray
    unlabeled_x: np.ndarray = field(default_factory=lambda: np.empty((0, 1)))

    def __post_init__(self):
        y = np.asarray(self.labeled_y, dtype=float).reshape(-1)
        lx = np.asarray(self.labeled_x, dtype=float)
        ux = np.asarray(self.unlabeled_x, dtype=float)
        if lx.ndim == 1:
            lx = lx.reshape(-1, 1)
        if ux.ndim == 1:
            ux = ux.reshape(-1, 1)
        if lx.shape[0] != y.size:
            raise InvalidDataError("labeled_x and labeled_y have different lengths")
        if lx.shape[0] == 0 and lx.shape[1] == 0:
            lx = np.empty((0, ux.shape[1]))
        if ux.shape[0] == 0:
            ux = np.empty((0, lx.shape[1]))
        if lx.shape[1] != ux.shape[1]:
            raise InvalidDataError("labeled and unlabeled x dimensions differ")
        object.__setattr__(self, "labeled_y", y)
        object.__setattr__(self, "labeled_x", lx)
        object.__setattr__(self, "unlabeled_x", ux)

    @property
    def x_dim(self) -> int:
        return self.labeled_x.shape[1]

    @property
    def n_labeled(self) -> int:
        return self.labeled_y.size

    @property
    def n_unlabeled(self) -> int:
        return self.unlabeled_x.shape[0]

    def labeled_only(self) -> "SemiSupDataset":
        return SemiSupDataset(self.labeled_y, self.labeled_x, np.empty((0, self.x_dim)))


@dataclass(frozen=True)
class GibbsState:
    params: MixtureParams
    alloc_labeled: np.ndarray
    alloc_unlabeled: np.ndarray
    imputed_y: np.ndarray | None


# --------------------------------------------------------------------------
# Density algebra


@dataclass(frozen=True)
class ConditionalForm:
    """``y | x ~ N(intercept + beta' x, resid_var)`` with ``x ~ marginal``."""

    marginal: GaussianComponent
    beta: np.ndarray
    intercept: float
    resid_var: float


def joint_to_conditional(component: GaussianComponent) -> ConditionalForm:
    """Split a normal over ``(y, x)`` into the x-marginal and the regression of y on x.

    ``beta = Sigma_x^{-1} rho`` and ``resid_var = sigma_y^2 - beta' rho``.
    """
    mu, s = component.mu, component.sigma
    if mu.size < 2:
        raise InvalidParameterError("joint component needs at least one x coordinate")
    sx = s[1:, 1:]
    rho = s[1:, 0]
    beta = np.linalg.solve(sx, rho)
    resid = float(s[0, 0] - beta @ rho)
    intercept = float(mu[0] - beta @ mu[1:])
    return ConditionalForm(GaussianComponent(mu[1:], sx), beta, intercept, resid)


def _batched_logpdf(x, means, covs):
    """Log N(x_g; means[..., :], covs[...]) for grid rows ``x`` (G, d).

    ``means`` is (..., d) and ``covs`` (..., d, d); result is (..., G).
    """
    chol = np.linalg.cholesky(covs)
    diff = x[None, :, :] - means.reshape(-1, 1, means.shape[-1])
    chol_f = chol.reshape(-1, chol.shape[-2], chol.shape[-1])
    # triangular solves, batched
    z = np.linalg.solve(chol_f, np.swapaxes(diff, 1, 2))
    maha = np.sum(z * z, axis=1)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol_f, axis1=1, axis2=2)), axis=1)
    d = means.shape[-1]
    out = -0.5 * (d * _LOG_2PI + logdet[:, None] + maha)
    return out.reshape(means.shape[:-1] + (x.shape[0],))


def _sorted_sum(a, axis):
    return np.sum(np.sort(a, axis=axis), axis=axis)


def _log_weights(log_pi, log_f, axis):
    """Normalize ``log_pi + log_f`` along the component ``axis`` (order-independent)."""
    lj = log_pi + log_f
    lse = special.logsumexp(np.sort(lj, axis=axis), axis=axis, keepdims=True)
    return lj - lse


def _x_block(params: MixtureParams):
    r = params.n_response
    return params.means[:, r:], params.covs[:, r:, r:]


def conditional_mixture_weights(params: MixtureParams, x) -> np.ndarray:
    """``w_i(x) = pi_i f_i(x) / sum_j pi_j f_j(x)`` evaluated in log space."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    mx, sx = _x_block(params)
    if x.shape[1] != mx.shape[1]:
        raise InvalidParameterError("x dimension does not match the mixture's x block")
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.weights)
    log_f = _batched_logpdf(x, mx, sx)[:, 0]
    return np.exp(_log_weights(log_pi, log_f, axis=0))


# --------------------------------------------------------------------------
# Sample-set helpers


@dataclass(frozen=True)
class _Stacked:
    log_pi: np.ndarray  # (S, m)
    mx: np.ndarray  # (S, m, dx)
    sx: np.ndarray  # (S, m, dx, dx)
    beta: np.ndarray | None  # (S, m, dx)
    intercept: np.ndarray | None  # (S, m)
    resid: np.ndarray | None  # (S, m)


def _stack(samples: Sequence[MixtureParams]) -> _Stacked:
    if len(samples) == 0:
        raise InvalidParameterError("empty posterior sample set")
    r = samples[0].n_response
    w = np.stack([s.weights for s in samples])
    means = np.stack([s.means for s in samples])
    covs = np.stack([s.covs for s in samples])
    with np.errstate(divide="ignore"):
        log_pi = np.log(w)
    mx, sx = means[:, :, r:], covs[:, :, r:, r:]
    if r == 0:
        return _Stacked(log_pi, mx, sx, None, None, None)
    rho = covs[:, :, r:, 0]
    beta = np.linalg.solve(sx, rho[..., None])[..., 0]
    resid = covs[:, :, 0, 0] - np.sum(beta * rho, axis=-1)
    intercept = means[:, :, 0] - np.sum(beta * mx, axis=-1)
    return _Stacked(log_pi, mx, sx, beta, intercept, resid)


def _grid(x_grid, dx):
    g = np.asarray(x_grid, dtype=float)
    if g.ndim <= 1:
        g = g.reshape(-1, 1) if dx == 1 else g.reshape(1, -1)
    if g.shape[1] != dx:
        raise InvalidParameterError("grid dimension does not match the mixture's x block")
    if g.shape[0] == 0:
        raise InvalidParameterError("empty grid")
    return g


def _weights_on_grid(stk: _Stacked, g):
    s, m, dx = stk.mx.shape
    log_f = _batched_logpdf(g, stk.mx.reshape(s * m, dx), stk.sx.reshape(s * m, dx, dx)).reshape(s, m, -1)
    return np.exp(_log_weights(stk.log_pi[:, :, None], log_f, axis=1))  # (S, m, G)


def predictive_regression_curve(samples: Sequence[MixtureParams], x_grid) -> np.ndarray:
    """Posterior mean ``E(y* | x*, D)`` at each grid point."""
    stk = _stack(samples)
    if stk.beta is None:
        raise InvalidParameterError("regression curve needs joint (y, x) components")
    g = _grid(x_grid, stk.mx.shape[2])
    w = _weights_on_grid(stk, g)
    cond_mean = stk.intercept[:, :, None] + np.einsum("smd,gd->smg", stk.beta, g)
    per_sample = _sorted_sum(w * cond_mean, axis=1)
    return per_sample.mean(axis=0)


def predictive_density(samples: Sequence[MixtureParams], x_star, y_grid) -> np.ndarray:
    """Posterior predictive density ``p(y* | x*, D)`` over ``y_grid``."""
    stk = _stack(samples)
    if stk.beta is None:
        raise InvalidParameterError("predictive density needs joint (y, x) components")
    g = _grid(x_star, stk.mx.shape[2])[:1]
    y = np.asarray(y_grid, dtype=float).reshape(-1)
    w = _weights_on_grid(stk, g)[:, :, 0]  # (S, m)
    mean = stk.intercept + np.einsum("smd,d->sm", stk.beta, g[0])
    var = stk.resid
    logphi = -0.5 * (_LOG_2PI + np.log(var)[:, :, None] + (y[None, None, :] - mean[:, :, None]) ** 2 / var[:, :, None])
    dens = w[:, :, None] * np.exp(logphi)
    return _sorted_sum(dens, axis=1).mean(axis=0)


def classify(samples: Sequence[MixtureParams], x_star) -> float:
    """Average over draws of ``pi f_1(x) / (pi f_1(x) + (1 - pi) f_0(x))``."""
    stk = _stack(samples)
    if stk.beta is not None or stk.log_pi.shape[1] != 2:
        raise InvalidParameterError("classify needs two-class discriminant parameters")
    g = _grid(x_star, stk.mx.shape[2])[:1]
    w = _weights_on_grid(stk, g)[:, 1, 0]
    return float(np.mean(w))


def classify_many(samples: Sequence[MixtureParams], x_rows) -> np.ndarray:
    stk = _stack(samples)
    if stk.beta is not None or stk.log_pi.shape[1] != 2:
        raise InvalidParameterError("classify needs two-class discriminant parameters")
    g = _grid(x_rows, stk.mx.shape[2])
    return _weights_on_grid(stk, g)[:, 1, :].mean(axis=0)


# --------------------------------------------------------------------------
# Gibbs sampler


def niw_posterior_params(prior: NIWMixturePrior, z: np.ndarray):
    """Return ``(mean, kappa, dof, scale)`` of the NIW full conditional given rows ``z``.

    ``dof`` is on the prior's own convention (the data shift is the same).
    """
    n = z.shape[0]
    k0 = 1.0 / prior.tau
    kn = k0 + n
    if n:
        zbar = z.mean(axis=0)
        c = z - zbar
        scatter = c.T @ c
        mean = n * zbar / kn
        scale = prior.iw_scale + scatter + (k0 * n / kn) * np.outer(zbar, zbar)
    else:
        mean = np.zeros(prior.dim)
        scale = prior.iw_scale
    return mean, kn, prior.iw_dof + n, scale


def niw_posterior_draw(prior: NIWMixturePrior, z: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    mean, kn, dof, scale = niw_posterior_params(prior, z)
    sigma = st.sample_inverse_wishart(dof, scale, rng, prior.iw_convention)
    mu = st.sample_mvn(mean, sigma / kn, rng)
    return mu, sigma


def _sample_categorical(log_p: np.ndarray, rng) -> np.ndarray:
    """One draw per row of normalized log-probabilities ``(n, m)``."""
    if log_p.shape[0] == 0:
        return np.empty(0, dtype=int)
    p = np.exp(log_p)
    cum = np.cumsum(p, axis=1)
    u = rng.random(log_p.shape[0]) * cum[:, -1]
    idx = np.sum(cum <= u[:, None], axis=1)
    return np.minimum(idx, log_p.shape[1] - 1)


def _check_mode(mode):
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}, got {mode!r}")


def _expected_dim(data: SemiSupDataset, mode: str) -> int:
    return data.x_dim + (1 if mode == "regression" else 0)


def _update_parameters(alloc_l, alloc_u, z_l, z_u, prior, rng, n_response):
    m = prior.m
    counts = np.bincount(alloc_l, minlength=m) + np.bincount(alloc_u, minlength=m)
    weights = st.sample_dirichlet(prior.dirichlet_alpha + counts, rng)
    means = np.empty((m, prior.dim))
    covs = np.empty((m, prior.dim, prior.dim))
    for k in range(m):
        if n_response:
            means[k], covs[k] = regression_component_draw(prior, z_l[alloc_l == k], z_u[alloc_u == k], rng)
        else:
            zk = np.concatenate([z_l[alloc_l == k], z_u[alloc_u == k]], axis=0)
            means[k], covs[k] = niw_posterior_draw(prior, zk, rng)
    return MixtureParams(weights, means, covs, n_response)


def regression_component_draw(prior: NIWMixturePrior, z_labeled: np.ndarray, x_unlabeled: np.ndarray, rng):
    """Draw a joint ``(y, x)`` component given labeled rows and unlabeled x rows.

    The joint NIW prior splits into independent pieces: an NIW on the x-block
    (dof reduced by one) updated with every x row, and a normal/inverse-gamma
    regression of y on x updated with the labeled rows only. Missing responses
    are therefore integrated out exactly. With no unlabeled rows the result is
    distributed as the plain joint NIW conditional.
    """
    s0 = prior.iw_scale
    nu = prior.standard_dof
    k0 = 1.0 / prior.tau
    sxx0 = s0[1:, 1:]
    sxy0 = s0[1:, 0]
    b0 = np.linalg.solve(sxx0, sxy0)
    syx0 = float(s0[0, 0] - sxy0 @ b0)

    # x-marginal: NIW(0, k0, nu - 1, S0_xx) with all x rows
    x_rows = np.concatenate([z_labeled[:, 1:], x_unlabeled], axis=0)
    n = x_rows.shape[0]
    kn = k0 + n
    if n:
        xbar = x_rows.mean(axis=0)
        c = x_rows - xbar
        sxx = sxx0 + c.T @ c + (k0 * n / kn) * np.outer(xbar, xbar)
        mean_x = n * xbar / kn
    else:
        sxx, mean_x = sxx0, np.zeros(sxx0.shape[0])
    sigma_xx = st.sample_inverse_wishart(nu - 1.0 + n, sxx, rng)
    mu_x = st.sample_mvn(mean_x, sigma_xx / kn, rng)

    # regression y = a + beta'x + e: (a, beta) | t2 ~ N(c0, t2 L0^-1), t2 ~ IG(nu/2, syx0/2)
    p = sxx0.shape[0]
    lam0 = np.zeros((p + 1, p + 1))
    lam0[0, 0] = k0
    lam0[1:, 1:] = sxx0
    c0 = np.concatenate([[0.0], b0])
    y = z_labeled[:, 0]
    h = np.column_stack([np.ones(y.size), z_labeled[:, 1:]])
    lam_n = lam0 + h.T @ h
    lam_n = 0.5 * (lam_n + lam_n.T)
    chol = np.linalg.cholesky(lam_n)
    rhs = lam0 @ c0 + h.T @ y
    c_n = np.linalg.solve(lam_n, rhs)
    shape = 0.5 * (nu + y.size)
    rate = 0.5 * (syx0 + y @ y + c0 @ lam0 @ c0 - c_n @ lam_n @ c_n)
    rate = max(rate, 1e-300)
    t2 = rate / rng.standard_gamma(shape)
    z = rng.standard_normal(p + 1)
    coef = c_n + np.sqrt(t2) * np.linalg.solve(chol.T, z)
    a, beta = coef[0], coef[1:]

    sxy = sigma_xx @ beta
    mu = np.concatenate([[a + beta @ mu_x], mu_x])
    sigma = np.empty((p + 1, p + 1))
    sigma[0, 0] = t2 + beta @ sxy
    sigma[0, 1:] = sxy
    sigma[1:, 0] = sxy
    sigma[1:, 1:] = sigma_xx
    return mu, sigma


def _joint_rows(data: SemiSupDataset, mode):
    if mode == "regression":
        return np.column_stack([data.labeled_y, data.labeled_x]), data.unlabeled_x
    return data.labeled_x, data.unlabeled_x


def _impute(params: MixtureParams, data: SemiSupDataset, alloc_u, rng) -> np.ndarray:
    if data.n_unlabeled == 0:
        return np.empty(0)
    stk = _stack([params])
    mean = stk.intercept[0, alloc_u] + np.sum(stk.beta[0, alloc_u] * data.unlabeled_x, axis=1)
    sd = np.sqrt(stk.resid[0, alloc_u])
    return mean + sd * rng.standard_normal(data.n_unlabeled)


def _kmeans(x: np.ndarray, m: int, rng, iters: int = 20) -> np.ndarray:
    """k-means++ seeding followed by Lloyd iterations; returns centers."""
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    for _ in range(1, m):
        d2 = np.min(((x[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        tot = d2.sum()
        if tot <= 0:
            centers.append(x[rng.integers(n)])
        else:
            centers.append(x[np.searchsorted(np.cumsum(d2), rng.random() * tot)])
    c = np.array(centers)
    for _ in range(iters):
        lab = np.argmin(((x[:, None, :] - c[None]) ** 2).sum(-1), axis=1)
        new = np.array([x[lab == k].mean(axis=0) if np.any(lab == k) else c[k] for k in range(m)])
        if np.allclose(new, c):
            break
        c = new
    return c


def _nearest(x, centers):
    if x.shape[0] == 0:
        return np.empty(0, dtype=int)
    return np.argmin(((x[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)


def initial_state(data: SemiSupDataset, prior: NIWMixturePrior, rng, mode: str = "regression") -> GibbsState:
    """Seed allocations by nearest k-means center on x, then draw parameters.

    In discriminant mode labeled allocations are the labels and centers come
    from labeled class means where available.
    """
    _check_mode(mode)
    if prior.dim != _expected_dim(data, mode):
        raise InvalidParameterError(f"prior dim {prior.dim} does not match data ({mode} mode)")
    n_response = 1 if mode == "regression" else 0
    m = prior.m
    x_all = np.concatenate([data.labeled_x, data.unlabeled_x], axis=0)
    if x_all.shape[0] == 0:
        params = prior.sample(rng, n_response)
        empty = np.empty(0, dtype=int)
        return GibbsState(params, empty, empty, np.empty(0) if mode == "regression" else None)

    if mode == "discriminant":
        if m != 2:
            raise InvalidParameterError("discriminant mode uses exactly two components")
        alloc_l = data.labeled_y.astype(int)
        if np.any((alloc_l != 0) & (alloc_l != 1)) or np.any(alloc_l != data.labeled_y):
            raise InvalidDataError("discriminant labels must be 0 or 1")
        centers = _kmeans(x_all, m, rng) if x_all.shape[0] >= m else np.repeat(x_all[:1], m, axis=0)
        for k in range(m):
            if np.any(alloc_l == k):
                centers[k] = data.labeled_x[alloc_l == k].mean(axis=0)
        alloc_u = _nearest(data.unlabeled_x, centers)
    else:
        centers = _kmeans(x_all, m, rng) if x_all.shape[0] >= m else np.repeat(x_all[:1], m, axis=0)
        alloc_l = _nearest(data.labeled_x, centers)
        alloc_u = _nearest(data.unlabeled_x, centers)
    z_l, z_u = _joint_rows(data, mode)
    params = _update_parameters(alloc_l, alloc_u, z_l, z_u, prior, rng, n_response)
    imputed = _impute(params, data, alloc_u, rng) if mode == "regression" else None
    return GibbsState(params, alloc_l, alloc_u, imputed)


def gibbs_step(state: GibbsState, data: SemiSupDataset, prior: NIWMixturePrior, rng,
               mode: str = "regression") -> GibbsState:
    """One full sweep: allocate, redraw weights and components, impute missing y.

    Component updates integrate the missing responses out analytically (see
    :func:`regression_component_draw`); the imputed responses stored in the
    state are then drawn from ``f_k(y | x)`` under the new parameters, so the
    state is a draw from the full joint conditional. A component left with no
    allocations is redrawn from the prior.
    """
    _check_mode(mode)
    params = state.params
    if state.alloc_labeled.size != data.n_labeled or state.alloc_unlabeled.size != data.n_unlabeled:
        raise InvalidParameterError("state does not match data sizes")
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.weights)
    z_l_fixed = np.column_stack([data.labeled_y, data.labeled_x]) if mode == "regression" else data.labeled_x

    # (a) allocations
    if mode == "regression":
        if data.n_labeled:
            lf = _batched_logpdf(z_l_fixed, params.means, params.covs)  # (m, n)
            alloc_l = _sample_categorical(_log_weights(log_pi[:, None], lf, axis=0).T, rng)
        else:
            alloc_l = np.empty(0, dtype=int)
    else:
        alloc_l = state.alloc_labeled
    mx, sx = _x_block(params)
    if data.n_unlabeled:
        uf = _batched_logpdf(data.unlabeled_x, mx, sx)
        alloc_u = _sample_categorical(_log_weights(log_pi[:, None], uf, axis=0).T, rng)
    else:
        alloc_u = np.empty(0, dtype=int)

    # (c), (d) weights, then components with missing responses integrated out
    z_l, z_u = _joint_rows(data, mode)
    new_params = _update_parameters(alloc_l, alloc_u, z_l, z_u, prior, rng, params.n_response)

    # (b) impute missing responses from f_k(y | x) under the fresh parameters
    imputed = _impute(new_params, data, alloc_u, rng) if mode == "regression" else None
    return GibbsState(new_params, alloc_l, alloc_u, imputed)


def fit_mixture(data: SemiSupDataset, prior: NIWMixturePrior, n_burn: int, n_keep: int, thin: int, rng,
                mode: str = "regression") -> list[MixtureParams]:
    """Run the Gibbs sampler and return ``n_keep`` retained parameter draws."""
    if n_keep < 1 or thin < 1 or n_burn < 0:
        raise InvalidParameterError("need n_keep >= 1, thin >= 1, n_burn >= 0")
    state = initial_state(data, prior, rng, mode)
    for _ in range(n_burn):
        state = gibbs_step(state, data, prior, rng, mode)
    kept = []
    for _ in range(n_keep):
        for _ in range(thin):
            state = gibbs_step(state, data, prior, rng, mode)
        kept.append(state.params)
    return kept


def simulate_mixture(params: MixtureParams, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` rows and their component indices from a mixture."""
    comp = rng.choice(params.m, size=n, p=params.weights)
    chols = np.linalg.cholesky(params.covs)
    z = rng.standard_normal((n, params.dim))
    rows = params.means[comp] + np.einsum("nij,nj->ni", chols[comp], z)
    return rows, comp


def niw_split_draws(prior: NIWMixturePrior, n_draws: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(mu, Sigma)`` from one component's NIW prior and split each draw.

    Returns ``(phi, theta)`` rows: ``phi = (intercept, beta, log resid_var)``
    and ``theta = (mu_x, log diag Sigma_x, off-diagonal Sigma_x)``. Variances
    enter on the log scale, a coordinatewise monotone map that leaves
    independence unchanged while taming inverse-Wishart tails.
    """
    phi, theta = [], []
    iu = np.triu_indices(prior.dim - 1, 1)
    for _ in range(int(n_draws)):
        mu, sigma = prior.sample_component(rng)
        cf = joint_to_conditional(GaussianComponent(mu, sigma))
        sx = cf.marginal.sigma
        phi.append(np.concatenate([[cf.intercept], cf.beta, [np.log(cf.resid_var)]]))
        theta.append(np.concatenate([cf.marginal.mu, np.log(np.diag(sx)), sx[iu]]))
    return np.array(phi), np.array(theta)


def niw_independence_check(prior: NIWMixturePrior, n_draws: int, rng, n_permutations: int = 99,
                           block_size: int = 500):
    """Distance-correlation permutation test of ``phi`` against ``theta`` under the NIW prior."""
    from . import dcor

    phi, theta = niw_split_draws(prior, n_draws, rng)
    return dcor.permutation_dcor_test(phi, theta, rng, n_permutations, block_size)
