"""Radial-basis kernel models with base points on labeled and unlabeled x.

The Bayesian model is a probit on

    f(x) = b0 + sum_i w_i K(x, u_i),   u_i in labeled x  ∪  unlabeled x,

so unlabeled covariates enter by placing basis functions where the data lie.
Two coefficient priors are available:

* ``"iid"`` (default): ``w ~ N(0, prior_scale * I)``. The induced prior on
  ``f`` has covariance ``prior_scale * K K'``, which concentrates where base
  points are dense.
* ``"gram"``: ``w ~ N(0, prior_scale * K^{-1})`` (precision proportional to
  the Gram matrix). This makes ``f`` a Gaussian process with covariance
  ``prior_scale * K`` restricted to the span of the base points; predictions
  then barely move when unlabeled base points are added.

The intercept has an independent ``N(0, intercept_scale)`` prior.

The deterministic counterpart minimizes the squared-loss manifold
regularization objective

    (1/n) sum_labeled (y_i - f(x_i))^2 + gamma_a * a' K a
        + gamma_i / (n + n_m)^2 * f' L f

over ``f = K a`` supported on all ``n + n_m`` points, where ``L`` is a graph
Laplacian on the same points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special
from scipy.spatial.distance import cdist, pdist

from . import factor
from .errors import InvalidDataError, InvalidParameterError, SingularSystemError

PRIORS = ("iid", "gram")
_GRAM_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class RbfKernel:
    """``K(u, v) = exp(-|u - v|^2 / (2 bandwidth^2))``."""

    bandwidth: float

    def __post_init__(self):
        if not float(self.bandwidth) > 0:
            raise InvalidParameterError("bandwidth must be positive")
        object.__setattr__(self, "bandwidth", float(self.bandwidth))


def _rows(points) -> np.ndarray:
    a = np.asarray(points, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return a


def kernel_matrix(points_a, points_b, kernel: RbfKernel) -> np.ndarray:
    a, b = _rows(points_a), _rows(points_b)
    if a.shape[1] != b.shape[1]:
        raise InvalidParameterError("point sets have different dimensions")
    d2 = cdist(a, b, "sqeuclidean")
    return np.exp(-d2 / (2.0 * kernel.bandwidth**2))


def median_bandwidth(points) -> float:
    """Median pairwise distance, the default bandwidth."""
    pts = _rows(points)
    if len(pts) < 2:
        raise InvalidDataError("need at least two points for a median-distance bandwidth")
    d = pdist(pts)
    med = float(np.median(d))
    if med <= 0:
        pos = d[d > 0]
        if pos.size == 0:
            raise InvalidDataError("all points coincide")
        med = float(np.median(pos))
    return med


@dataclass(frozen=True)
class KernelDesign:
    base_points: np.ndarray
    gram: np.ndarray


def kernel_design(base_points, kernel: RbfKernel) -> KernelDesign:
    base = _rows(base_points)
    g = kernel_matrix(base, base, kernel)
    return KernelDesign(base, 0.5 * (g + g.T))


@dataclass(frozen=True)
class KernelFit:
    """A fitted kernel expansion.

    For ``mode="bayes-probit"`` ``weights`` is ``(n_keep, 1 + n_base)`` with
    the intercept in column 0. For ``mode="laprls"`` it is a single
    ``n_base`` vector and there is no intercept.
    """

    mode: str
    base_points: np.ndarray
    kernel: RbfKernel
    weights: np.ndarray
    intercept: bool
    config: dict = field(default_factory=dict)

    def latent(self, x) -> np.ndarray:
        """``f(x)`` for every retained draw: shape ``(n_draws, n_points)``."""
        k = kernel_matrix(x, self.base_points, self.kernel)
        w = np.atleast_2d(self.weights)
        if self.intercept:
            return w[:, :1] + w[:, 1:] @ k.T
        return w @ k.T


# --------------------------------------------------------------------------
# Bayesian kernel probit


def _binary_labels(y) -> np.ndarray:
    y = np.asarray(y).reshape(-1)
    if not set(np.unique(y)) <= {0, 1}:
        raise InvalidDataError("labels must be 0/1")
    if len(np.unique(y)) < 2:
        raise InvalidDataError("both classes must be present among the labels")
    return y.astype(int)


def _weight_precision(gram: np.ndarray, prior: str, prior_scale: float) -> np.ndarray:
    n = gram.shape[0]
    if prior == "iid":
        return np.eye(n) / prior_scale
    # Gram precision; jitter the diagonal until it factors
    for jit in _GRAM_JITTERS:
        g = gram + jit * np.eye(n)
        try:
            np.linalg.cholesky(g)
            return g / prior_scale
        except np.linalg.LinAlgError:
            continue
    raise SingularSystemError("Gram matrix is singular even after jitter",
                              {"max_jitter": _GRAM_JITTERS[-1], "n_base": n})


def rb_fit(labeled_x, labeled_y, unlabeled_x, kernel: RbfKernel | None = None, prior_scale: float = 1.0,
           n_burn: int = 500, n_keep: int = 1000, rng=None, prior: str = "iid",
           intercept_scale: float = 4.0, thin: int = 1) -> KernelFit:
    """Kernel probit with base points ``labeled_x`` followed by ``unlabeled_x``.

    ``kernel=None`` uses the median pairwise distance of all given x values.
    """
    if rng is None:
        raise InvalidParameterError("an explicit rng is required")
    if prior not in PRIORS:
        raise InvalidParameterError(f"prior must be one of {PRIORS}")
    if not prior_scale > 0 or not intercept_scale > 0:
        raise InvalidParameterError("prior scales must be positive")
    lx = _rows(labeled_x)
    y = _binary_labels(labeled_y)
    if len(lx) != len(y):
        raise InvalidDataError("labeled x and y have different lengths")
    ux = np.empty((0, lx.shape[1])) if unlabeled_x is None or len(unlabeled_x) == 0 else _rows(unlabeled_x)
    base = np.vstack([lx, ux])
    if kernel is None:
        kernel = RbfKernel(median_bandwidth(base))
    design = kernel_design(base, kernel)
    n_base = len(base)
    prec = np.zeros((n_base + 1, n_base + 1))
    prec[0, 0] = 1.0 / intercept_scale
    prec[1:, 1:] = _weight_precision(design.gram, prior, prior_scale)
    x = np.column_stack([np.ones(len(lx)), design.gram[: len(lx)]])
    draws = factor.probit_gibbs(x, y, prec, n_burn, n_keep, rng, thin)
    config = {"prior": prior, "prior_scale": prior_scale, "intercept_scale": intercept_scale,
              "bandwidth": kernel.bandwidth, "n_burn": n_burn, "n_keep": n_keep, "thin": thin}
    return KernelFit("bayes-probit", base, kernel, draws, True, config)


@dataclass(frozen=True)
class KernelPrediction:
    probability: float
    lower: float
    upper: float


def rb_predict_many(fit: KernelFit, x) -> np.ndarray:
    """Posterior predictive probabilities at rows ``x``."""
    if fit.mode != "bayes-probit":
        raise InvalidParameterError("probabilities need a bayes-probit fit")
    return special.ndtr(fit.latent(x)).mean(axis=0)


def rb_predict(fit: KernelFit, x_star) -> KernelPrediction:
    """Predictive probability and the 2.5/97.5 percentiles of the per-draw probabilities."""
    if fit.mode != "bayes-probit":
        raise InvalidParameterError("probabilities need a bayes-probit fit")
    p = special.ndtr(fit.latent(np.asarray(x_star, dtype=float).reshape(1, -1)))[:, 0]
    lo, hi = np.percentile(p, [2.5, 97.5])
    return KernelPrediction(float(p.mean()), float(lo), float(hi))


# --------------------------------------------------------------------------
# Contours


@dataclass(frozen=True)
class Grid2D:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    nx: int = 40
    ny: int = 40

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(*self.x_range, self.nx), np.linspace(*self.y_range, self.ny)

    def points(self) -> np.ndarray:
        """Lattice points, x varying fastest."""
        gx, gy = self.axes()
        xx, yy = np.meshgrid(gx, gy)
        return np.column_stack([xx.ravel(), yy.ravel()])


def probability_field(fit: KernelFit, grid: Grid2D, predict=None) -> np.ndarray:
    """Predictive probabilities on the grid, shape ``(ny, nx)``."""
    predict = predict or (lambda pts: rb_predict_many(fit, pts))
    return np.asarray(predict(grid.points())).reshape(grid.ny, grid.nx)


def contour_points(field_values: np.ndarray, grid: Grid2D, level: float = 0.5) -> np.ndarray:
    """Crossings of ``level`` on lattice edges, located by linear interpolation."""
    gx, gy = grid.axes()
    d = field_values - level
    pts = []
    # horizontal edges
    a, b = d[:, :-1], d[:, 1:]
    iy, ix = np.nonzero(((a < 0) & (b >= 0)) | ((a >= 0) & (b < 0)))
    for j, i in zip(iy, ix):
        t = a[j, i] / (a[j, i] - b[j, i])
        pts.append((gx[i] + t * (gx[i + 1] - gx[i]), gy[j]))
    # vertical edges
    a, b = d[:-1, :], d[1:, :]
    iy, ix = np.nonzero(((a < 0) & (b >= 0)) | ((a >= 0) & (b < 0)))
    for j, i in zip(iy, ix):
        t = a[j, i] / (a[j, i] - b[j, i])
        pts.append((gx[i], gy[j] + t * (gy[j + 1] - gy[j])))
    if not pts:
        return np.empty((0, 2))
    return np.array(sorted(pts))


def decision_contour(fit: KernelFit, grid: Grid2D, predict=None) -> np.ndarray:
    """Points where the predictive probability crosses 0.5."""
    if grid.nx < 2 or grid.ny < 2:
        raise InvalidParameterError("contours need a 2-D lattice with at least 2 points per axis")
    return contour_points(probability_field(fit, grid, predict), grid)


# --------------------------------------------------------------------------
# Graph Laplacian and LapRLS


@dataclass(frozen=True)
class GraphLaplacian:
    weights: np.ndarray
    laplacian: np.ndarray


@dataclass(frozen=True)
class LaplacianConfig:
    """``bandwidth=None`` reuses the kernel bandwidth; ``knn`` sparsifies the weights."""

    bandwidth: float | None = None
    knn: int | None = None


def graph_laplacian(points, bandwidth: float, knn: int | None = None) -> GraphLaplacian:
    """Heat-kernel weights ``W_ij = exp(-|x_i - x_j|^2 / (2 h^2))`` and ``L = D - W``.

    With ``knn`` set, an edge is kept when either endpoint is among the
    other's ``knn`` nearest neighbours.
    """
    pts = _rows(points)
    n = len(pts)
    if n < 2:
        raise InvalidDataError("a graph Laplacian needs at least two points")
    if not bandwidth > 0:
        raise InvalidParameterError("bandwidth must be positive")
    d2 = cdist(pts, pts, "sqeuclidean")
    w = np.exp(-d2 / (2.0 * bandwidth**2))
    np.fill_diagonal(w, 0.0)
    if knn is not None:
        if knn < 1:
            raise InvalidParameterError("knn must be positive")
        order = np.argsort(d2 + np.diag(np.full(n, np.inf)), axis=1, kind="stable")[:, : min(knn, n - 1)]
        mask = np.zeros((n, n), dtype=bool)
        mask[np.repeat(np.arange(n), order.shape[1]), order.ravel()] = True
        w = np.where(mask | mask.T, w, 0.0)
    w = 0.5 * (w + w.T)
    lap = np.diag(w.sum(axis=1)) - w
    return GraphLaplacian(w, lap)


def _laplacian_matrix(points, bandwidth: float, knn: int | None) -> np.ndarray:
    # a single point has no edges
    if len(points) < 2:
        return np.zeros((len(points), len(points)))
    return graph_laplacian(points, bandwidth, knn).laplacian


def laprls_objective(alpha, gram, labeled_y, laplacian, gamma_a: float, gamma_i: float) -> float:
    """Squared-loss manifold-regularization objective; the first ``n`` points are labeled."""
    alpha = np.asarray(alpha, dtype=float)
    y = np.asarray(labeled_y, dtype=float)
    n = len(y)
    total = gram.shape[0]
    f = gram @ alpha
    loss = np.mean((y - f[:n]) ** 2)
    return float(loss + gamma_a * alpha @ gram @ alpha + gamma_i / total**2 * f @ laplacian @ f)


def laprls_gradient(alpha, gram, labeled_y, laplacian, gamma_a: float, gamma_i: float) -> np.ndarray:
    y = np.asarray(labeled_y, dtype=float)
    n = len(y)
    total = gram.shape[0]
    f = gram @ alpha
    r = np.zeros(total)
    r[:n] = f[:n] - y
    return 2.0 * gram @ (r / n + gamma_a * alpha + gamma_i / total**2 * (laplacian @ f))


def laprls_fit(labeled_x, labeled_y, unlabeled_x, kernel: RbfKernel | None = None, gamma_a: float = 1e-3,
               gamma_i: float = 1e-2, laplacian_cfg: LaplacianConfig | None = None,
               rcond: float = 1e-13) -> KernelFit:
    """Exact minimizer of the objective over the expansion on all points.

    Setting the gradient to zero and cancelling the leading ``K`` gives

        (J K + gamma_a n I + gamma_i n / (n + n_m)^2 L K) a = J y,

    where ``J`` selects labeled points. Labels may be any reals; binary
    problems use ``-1/+1``.
    """
    if gamma_a < 0 or gamma_i < 0:
        raise InvalidParameterError("gamma_a and gamma_i must be nonnegative")
    lx = _rows(labeled_x)
    y = np.asarray(labeled_y, dtype=float).reshape(-1)
    if len(lx) != len(y) or len(y) == 0:
        raise InvalidDataError("need matching, non-empty labeled x and y")
    ux = np.empty((0, lx.shape[1])) if unlabeled_x is None or len(unlabeled_x) == 0 else _rows(unlabeled_x)
    base = np.vstack([lx, ux])
    if kernel is None:
        kernel = RbfKernel(median_bandwidth(base))
    cfg = laplacian_cfg or LaplacianConfig()
    n, total = len(lx), len(base)
    gram = kernel_design(base, kernel).gram
    lap = _laplacian_matrix(base, cfg.bandwidth or kernel.bandwidth, cfg.knn)
    j = np.zeros((total, total))
    j[np.arange(n), np.arange(n)] = 1.0
    a = j @ gram + gamma_a * n * np.eye(total) + (gamma_i * n / total**2) * lap @ gram
    rhs = np.concatenate([y, np.zeros(total - n)])
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= rcond * s[0]:
        hint = "; use a positive gamma_a" if gamma_a == 0 else ""
        raise SingularSystemError(f"LapRLS system is singular{hint}",
                                  {"min_singular_value": float(s[-1]), "max_singular_value": float(s[0])})
    alpha = np.linalg.solve(a, rhs)
    config = {"gamma_a": gamma_a, "gamma_i": gamma_i, "bandwidth": kernel.bandwidth,
              "laplacian_bandwidth": cfg.bandwidth or kernel.bandwidth, "knn": cfg.knn}
    return KernelFit("laprls", base, kernel, alpha, False, config)


def laprls_predict(fit: KernelFit, x) -> np.ndarray:
    if fit.mode != "laprls":
        raise InvalidParameterError("expected a laprls fit")
    return fit.latent(x)[0]


def laprls_stationarity(fit: KernelFit, labeled_y, laplacian_cfg: LaplacianConfig | None = None) -> float:
    """Relative gradient norm of the objective at the fitted weights."""
    cfg = laplacian_cfg or LaplacianConfig(fit.config.get("laplacian_bandwidth"), fit.config.get("knn"))
    gram = kernel_design(fit.base_points, fit.kernel).gram
    lap = _laplacian_matrix(fit.base_points, cfg.bandwidth or fit.kernel.bandwidth, cfg.knn)
    ga, gi = fit.config["gamma_a"], fit.config["gamma_i"]
    grad = laprls_gradient(fit.weights, gram, labeled_y, lap, ga, gi)
    y = np.asarray(labeled_y, dtype=float)
    scale = 2.0 * np.linalg.norm(gram[:, : len(y)] @ y) / len(y)
    return float(np.linalg.norm(grad) / max(scale, np.finfo(float).tiny))
