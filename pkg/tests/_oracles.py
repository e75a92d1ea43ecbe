"""Independent reference computations shared by unit and acceptance tests."""

import numpy as np
from scipy import optimize


def rbf(a, b, h):
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    out = np.empty((len(a), len(b)))
    for i in range(len(a)):
        for j in range(len(b)):
            out[i, j] = np.exp(-np.sum((a[i] - b[j]) ** 2) / (2 * h * h))
    return out


def manifold_objective(alpha, points, y, h, lap_h, gamma_a, gamma_i):
    """Squared loss + ambient penalty + (1/N^2) sum_ij W_ij (f_i - f_j)^2 / 2, written from scratch."""
    k = rbf(points, points, h)
    w = rbf(points, points, lap_h)
    np.fill_diagonal(w, 0.0)
    f = k @ alpha
    n, total = len(y), len(points)
    loss = np.mean((y - f[:n]) ** 2)
    ambient = alpha @ k @ alpha
    smooth = 0.5 * np.sum(w * (f[:, None] - f[None, :]) ** 2)
    return loss + gamma_a * ambient + gamma_i * smooth / total**2


def manifold_minimum(points, y, h, lap_h, gamma_a, gamma_i, seed=0):
    """Minimize the objective by gradient descent on ``alpha`` (L-BFGS, then plain steps).

    The objective is quadratic, ``a' Q a - 2 b' a + c``, so the gradient is
    formed from explicit ``Q`` and ``b``; no linear solve is used.
    """
    k = rbf(points, points, h)
    w = rbf(points, points, lap_h)
    np.fill_diagonal(w, 0.0)
    lap = np.diag(w.sum(axis=1)) - w
    n, total = len(y), len(points)
    kl = k[:n]
    q = kl.T @ kl / n + gamma_a * k + gamma_i / total**2 * k @ lap @ k
    b = kl.T @ y / n
    c = y @ y / n

    def fun(a):
        return a @ q @ a - 2 * b @ a + c, 2 * (q @ a - b)

    rng = np.random.default_rng(seed)
    res = optimize.minimize(fun, rng.standard_normal(total) * 0.01, jac=True, method="L-BFGS-B",
                            options={"maxiter": 100_000, "gtol": 1e-14, "ftol": 1e-16})
    a = res.x
    step = 1.0 / (2 * np.linalg.norm(q, 2))
    for _ in range(20_000):
        g = 2 * (q @ a - b)
        if np.linalg.norm(g) < 1e-10:
            break
        a = a - step * g
    return a, manifold_objective(a, points, y, h, lap_h, gamma_a, gamma_i)


def random_laprls_instance(rng):
    n = int(rng.integers(1, 6))
    m = int(rng.integers(0, 6))
    pts = rng.normal(size=(n + m, 2))
    y = rng.choice([-1.0, 1.0], size=n)
    h = float(rng.uniform(0.5, 2.0))
    gamma_a = float(10 ** rng.uniform(-3, -1))
    gamma_i = float(10 ** rng.uniform(-2, 1))
    return pts, n, y, h, gamma_a, gamma_i
