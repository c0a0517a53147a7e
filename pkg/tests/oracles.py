"""Independent reference computations used to check the library.

Nothing here imports geomc: derivatives come from finite differences of plain
functions, brackets from the canonical definition, posterior moments from
brute-force grid quadrature.
"""

import numpy as np

FD_STEP = 1e-5


def fd_grad(f, x, h=FD_STEP):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def fd_jacobian(f, x, h=FD_STEP):
    """Columns are central differences of a vector-valued ``f``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def poisson_bracket(A, B, z, d, h=1e-4):
    """``{A, B}(z) = sum_i dA/dx_i dB/dp_i - dA/dp_i dB/dx_i`` by central differences.

    ``A`` and ``B`` map a phase vector ``(x, p)`` of length ``2d`` to a real.
    """
    gA = fd_grad(A, z, h)
    gB = fd_grad(B, z, h)
    return float(gA[:d] @ gB[d:] - gA[d:] @ gB[:d])


def nested_bracket(A, B, C, z, d, h_inner=1e-4, h_outer=1e-3):
    """``{A, {B, C}}(z)`` with both brackets by finite differences."""
    inner = lambda w: poisson_bracket(B, C, w, d, h_inner)
    return poisson_bracket(A, inner, z, d, h_outer)


# -- plain-numpy target densities (independent of the package) --

def gaussian_logpdf(mean, cov):
    prec = np.linalg.inv(cov)
    return lambda x: -0.5 * (x - mean) @ prec @ (x - mean)


def banana_logpdf(b, s):
    return lambda x: -(x[0] ** 2 / (2 * s) + 0.5 * (x[1] + b * x[0] ** 2 - s * b) ** 2)


def logreg_logpdf(X, y, alpha):
    X = np.asarray(X, float)
    y = np.asarray(y, float)

    def f(w):
        eta = X @ w
        return float(np.sum(y * eta - np.log1p(np.exp(eta))) - 0.5 * alpha * w @ w)

    return f


def logreg_metric(X, alpha):
    X = np.asarray(X, float)

    def G(w):
        s = 1 / (1 + np.exp(-(X @ w)))
        return X.T @ np.diag(s * (1 - s)) @ X + alpha * np.eye(X.shape[1])

    return G


def logreg_grid_moments(X, y, alpha, lo=-6.0, hi=6.0, spacing=0.01):
    """Posterior mean and marginal variances of 2-d logistic regression by grid quadrature."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    g = np.arange(lo, hi + spacing / 2, spacing)
    w1, w2 = np.meshgrid(g, g, indexing="ij")
    eta = w1[..., None] * X[:, 0] + w2[..., None] * X[:, 1]
    logp = np.sum(y * eta - np.logaddexp(0, eta), axis=-1) - 0.5 * alpha * (w1**2 + w2**2)
    p = np.exp(logp - logp.max())
    p /= p.sum()
    m = np.array([(p * w1).sum(), (p * w2).sum()])
    v = np.array([(p * (w1 - m[0]) ** 2).sum(), (p * (w2 - m[1]) ** 2).sum()])
    return m, v


# -- harmonic oscillator U = x^2/2, K = p^2/2 --

def leapfrog_matrix(tau):
    """Exact linear map of one leapfrog step on the unit harmonic oscillator."""
    return np.array([[1 - tau**2 / 2, tau], [-tau * (1 - tau**2 / 4), 1 - tau**2 / 2]])


def leapfrog_invariant(x, p, tau):
    """Quadratic form exactly conserved by leapfrog on the unit oscillator."""
    return 0.5 * p**2 + 0.5 * (1 - tau**2 / 4) * x**2
