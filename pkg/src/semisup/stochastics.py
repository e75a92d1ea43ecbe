"""Seeded random-number core and the samplers/densities the models need.

All randomness flows through an explicit ``numpy.random.Generator`` backed by
PCG64 (see :func:`make_rng`). Nothing in the package touches numpy's global
RNG.

Inverse-Wishart convention
--------------------------
``IW(dof, S)`` with the default ``"standard"`` convention has density

    p(Sigma) ∝ |Sigma|^{-(dof + p + 1)/2} exp(-tr(S Sigma^{-1}) / 2),

requires ``dof > p - 1`` and has mean ``S / (dof - p - 1)`` when
``dof > p + 1``. Equivalently ``Sigma^{-1} ~ Wishart(dof, S^{-1})``.

The ``"dawid"`` convention reads the degrees of freedom as Dawid's
``delta > 0``; it is mapped to the standard one by ``dof = delta + p - 1``.
"""

from __future__ import annotations

import logging
import math
import warnings

import numpy as np
from scipy import linalg, special

from .errors import InvalidParameterError

log = logging.getLogger(__name__)

IW_CONVENTIONS = ("standard", "dawid")

_LOG_2PI = math.log(2.0 * math.pi)


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator for a 64-bit unsigned seed."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise InvalidParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def child_seed(master_seed: int, *keys: int) -> int:
    """Derive a reproducible 64-bit seed from ``master_seed`` and integer keys.

    Uses ``SeedSequence(entropy=master_seed, spawn_key=keys)``, so distinct key
    tuples give statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def child_rng(master_seed: int, *keys: int) -> np.random.Generator:
    return make_rng(child_seed(master_seed, *keys))


# --------------------------------------------------------------------------
# SPD helpers


def as_spd(matrix, name: str = "matrix") -> tuple[np.ndarray, np.ndarray]:
    """Symmetrize ``matrix`` and return ``(matrix, lower_cholesky)``.

    Raises InvalidParameterError when the Cholesky factorization fails.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidParameterError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidParameterError(f"{name} has non-finite entries")
    scale = max(float(np.max(np.abs(a))), np.finfo(float).tiny)
    asym = float(np.max(np.abs(a - a.T))) / scale
    if asym > 1e-8:
        warnings.warn(f"{name} is asymmetric (relative {asym:.2e}); symmetrizing", stacklevel=2)
    a = 0.5 * (a + a.T)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise InvalidParameterError(f"{name} is not positive definite") from exc
    return a, chol


def is_spd(matrix) -> bool:
    try:
        np.linalg.cholesky(np.asarray(matrix, dtype=float))
    except np.linalg.LinAlgError:
        return False
    return True


# --------------------------------------------------------------------------
# Dirichlet


def sample_dirichlet(alpha, rng: np.random.Generator) -> np.ndarray:
    """Draw one point of the simplex from ``Dir(alpha)``.

    Gamma variates are generated on the log scale, using
    ``Gamma(a) = Gamma(a + 1) * U**(1/a)`` for ``a < 1``, so that tiny
    concentrations do not underflow to an all-zero vector.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size == 0:
        raise InvalidParameterError("alpha must be a non-empty vector")
    if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
        raise InvalidParameterError(f"Dirichlet concentrations must be positive, got {alpha}")
    small = alpha < 1.0
    g = rng.standard_gamma(np.where(small, alpha + 1.0, alpha))
    logg = np.log(g)
    if np.any(small):
        u = rng.random(alpha.size)
        logg = np.where(small, logg + np.log(u) / alpha, logg)
    logp = logg - special.logsumexp(logg)
    p = np.exp(logp)
    return p / p.sum()


# --------------------------------------------------------------------------
# Inverse-Wishart


def standard_iw_dof(dof: float, dim: int, convention: str = "standard") -> float:
    if convention == "standard":
        return float(dof)
    if convention == "dawid":
        return float(dof) + dim - 1.0
    raise InvalidParameterError(f"unknown inverse-Wishart convention {convention!r}; use one of {IW_CONVENTIONS}")


def inverse_wishart_mean(dof: float, scale, convention: str = "standard") -> np.ndarray:
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    p = scale.shape[0]
    nu = standard_iw_dof(dof, p, convention)
    if nu <= p + 1:
        raise InvalidParameterError(f"inverse-Wishart mean is undefined for dof={nu} with dim={p}")
    return scale / (nu - p - 1.0)


def sample_inverse_wishart(dof: float, scale, rng: np.random.Generator, convention: str = "standard") -> np.ndarray:
    """Draw ``Sigma ~ IW(dof, scale)`` via the Bartlett decomposition.

    ``Sigma^{-1} = T T'`` with ``T = chol(scale^{-1}) A``; the inverse is
    formed from the triangular factor directly.
    """
    scale, _ = as_spd(scale, "inverse-Wishart scale")
    p = scale.shape[0]
    nu = standard_iw_dof(dof, p, convention)
    if not nu > p - 1:
        raise InvalidParameterError(f"inverse-Wishart dof must exceed dim - 1 = {p - 1}, got {nu}")
    prec_chol = np.linalg.cholesky(np.linalg.inv(scale))
    a = np.zeros((p, p))
    a[np.diag_indices(p)] = np.sqrt(rng.chisquare(nu - np.arange(p)))
    if p > 1:
        a[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    t = prec_chol @ a
    t_inv = linalg.solve_triangular(t, np.eye(p), lower=True)
    sigma = t_inv.T @ t_inv
    return 0.5 * (sigma + sigma.T)


# --------------------------------------------------------------------------
# Multivariate normal


def sample_mvn(mu, sigma, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from ``N(mu, sigma)``; ``size`` adds a leading sample axis."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma, chol = as_spd(sigma, "covariance")
    if sigma.shape[0] != mu.size:
        raise InvalidParameterError(f"mean has dim {mu.size} but covariance has dim {sigma.shape[0]}")
    if size is None:
        return mu + chol @ rng.standard_normal(mu.size)
    z = rng.standard_normal((int(size), mu.size))
    return mu + z @ chol.T


def mvn_logpdf(x, mu, sigma) -> float | np.ndarray:
    """Log-density of ``N(mu, sigma)`` at ``x``.

    ``x`` may be a single vector or an ``(n, d)`` array of rows.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma, chol = as_spd(sigma, "covariance")
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    xs = np.atleast_2d(x.reshape(1, -1) if single else x)
    d = mu.size
    if xs.shape[1] != d or sigma.shape[0] != d:
        raise InvalidParameterError("dimension mismatch in mvn_logpdf")
    z = linalg.solve_triangular(chol, (xs - mu).T, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    out = -0.5 * (d * _LOG_2PI + logdet + np.sum(z * z, axis=0))
    return float(out[0]) if single else out


# --------------------------------------------------------------------------
# Truncated normal


def _std_tail(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Standard normal conditioned on ``z > a`` (vectorized)."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    easy = a < 5.0
    if np.any(easy):
        ae = a[easy]
        u = rng.random(ae.size)
        # -Z given Z > a has cdf support below -a; invert on the log scale
        log_q = special.log_ndtr(-ae)
        w = special.ndtri(np.exp(np.log(u) + log_q)) if ae.size else ae
        z = -w
        out[easy] = np.maximum(z, np.nextafter(ae, np.inf))
    hard = ~easy
    if np.any(hard):
        # Robert (1995) translated-exponential rejection for deep tails
        idx = np.flatnonzero(hard)
        todo = idx
        while todo.size:
            at = a[todo]
            lam = 0.5 * (at + np.sqrt(at * at + 4.0))
            z = at + rng.exponential(1.0, todo.size) / lam
            accept = rng.random(todo.size) <= np.exp(-0.5 * (z - lam) ** 2)
            out[todo[accept]] = z[accept]
            todo = todo[~accept]
    return out


def sample_truncated_normal(mu, sigma, positive_side, rng: np.random.Generator):
    """Draw from ``N(mu, sigma^2)`` restricted to ``(0, inf)`` or ``(-inf, 0)``.

    Broadcasts over array arguments; scalar inputs give a float.
    """
    mu_a = np.asarray(mu, dtype=float)
    sigma_a = np.asarray(sigma, dtype=float)
    side = np.asarray(positive_side, dtype=bool)
    if np.any(~(sigma_a > 0)):
        raise InvalidParameterError("sigma must be positive")
    mu_b, sigma_b, side_b = np.broadcast_arrays(mu_a, sigma_a, side)
    sign = np.where(side_b, 1.0, -1.0)
    # reflect to the positive side: s * X > 0 with s * X ~ N(s * mu, sigma^2)
    m = sign * mu_b
    z = _std_tail((-m / sigma_b).ravel(), rng).reshape(m.shape)
    x = m + sigma_b * z
    x = np.where(x > 0, x, np.nextafter(0.0, 1.0))
    out = sign * x
    if out.ndim == 0:
        return float(out)
    return out
