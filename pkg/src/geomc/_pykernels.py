"""Pure numpy implementation of the numerical hot kernels.

This module mirrors ``geomc._ckernels`` function for function. It is used when
the compiled extension is unavailable, and it also drives trajectories for
targets defined from plain Python callables (any object exposing ``potential``,
``grad`` and, for Riemannian runs, ``metric``/``metric_partials`` works here).

Trajectory functions return ``(xs, ps, energies, status)`` where the arrays
hold the recorded phases up to and including the last completed step, and
``status`` is one of the ``STATUS_*`` codes below.
"""

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import expit

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_FIXED_POINT_FAILED = 2
STATUS_METRIC_DEGENERATE = 3

LOG_2PI = float(np.log(2.0 * np.pi))


def cholesky(a):
    """Lower Cholesky factor of ``a`` with a single bounded jitter retry.

    Returns ``None`` when factorization fails twice or produces non-finite entries.
    """
    a = np.asarray(a, dtype=float)
    try:
        chol = np.linalg.cholesky(a)
        if np.all(np.isfinite(chol)):
            return chol
    except np.linalg.LinAlgError:
        pass
    d = a.shape[0]
    jitter = 1e-10 * np.trace(a) / d
    try:
        chol = np.linalg.cholesky(a + jitter * np.eye(d))
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(chol)):
        return None
    return chol


def cho_apply_inverse(chol, b):
    """``G^{-1} b`` from the lower Cholesky factor of ``G``."""
    return cho_solve((chol, True), b, check_finite=False)


class GaussianKernel:
    """U(x) = (x - m)^T P (x - m) / 2 with constant metric P."""

    has_metric = True

    def __init__(self, mean, precision):
        self.mean = np.array(mean, dtype=float)
        self.precision = np.array(precision, dtype=float)
        self.dim = self.mean.shape[0]

    def potential(self, x):
        r = np.asarray(x, dtype=float) - self.mean
        return float(0.5 * (r @ (self.precision @ r)))

    def grad(self, x):
        return self.precision @ (np.asarray(x, dtype=float) - self.mean)

    def hessian(self, x):
        return self.precision.copy()

    def metric(self, x):
        return self.precision.copy()

    def metric_partials(self, x):
        return np.zeros((self.dim, self.dim, self.dim))


class BananaKernel:
    """Twisted Gaussian: U = x1^2/(2 s) + (x2 + b x1^2 - s b)^2 / 2.

    The metric is the Gauss-Newton metric J^T diag(1/s, 1) J of the map
    (x1, x2) -> (x1, x2 + b x1^2), which is positive definite everywhere.
    """

    has_metric = True

    def __init__(self, b, sigma1_sq):
        self.b = float(b)
        self.sigma1_sq = float(sigma1_sq)
        self.dim = 2

    def _residual(self, x):
        return x[1] + self.b * x[0] * x[0] - self.sigma1_sq * self.b

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        r = self._residual(x)
        return float(x[0] * x[0] / (2.0 * self.sigma1_sq) + 0.5 * r * r)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        r = self._residual(x)
        return np.array([x[0] / self.sigma1_sq + 2.0 * self.b * x[0] * r, r])

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        b, r = self.b, self._residual(x)
        off = 2.0 * b * x[0]
        return np.array(
            [[1.0 / self.sigma1_sq + 2.0 * b * r + off * off, off], [off, 1.0]]
        )

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        off = 2.0 * self.b * x[0]
        return np.array([[1.0 / self.sigma1_sq + off * off, off], [off, 1.0]])

    def metric_partials(self, x):
        x = np.asarray(x, dtype=float)
        b = self.b
        out = np.zeros((2, 2, 2))
        out[0] = [[8.0 * b * b * x[0], 2.0 * b], [2.0 * b, 0.0]]
        return out


class LogRegKernel:
    """Bayesian logistic regression with a N(0, alpha^{-1} I) prior.

    The metric is the expected Fisher information plus the prior precision,
    X^T diag(s (1 - s)) X + alpha I, with s the fitted probabilities.
    """

    has_metric = True

    def __init__(self, features, labels, alpha):
        self.features = np.array(features, dtype=float)
        self.labels = np.array(labels, dtype=float)
        self.alpha = float(alpha)
        self.dim = self.features.shape[1]

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        eta = self.features @ x
        nll = np.sum(np.logaddexp(0.0, eta) - self.labels * eta)
        return float(nll + 0.5 * self.alpha * (x @ x))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        s = expit(self.features @ x)
        return self.features.T @ (s - self.labels) + self.alpha * x

    def metric(self, x):
        s = expit(self.features @ np.asarray(x, dtype=float))
        w = s * (1.0 - s)
        return (self.features.T * w) @ self.features + self.alpha * np.eye(self.dim)

    hessian = metric

    def metric_partials(self, x):
        s = expit(self.features @ np.asarray(x, dtype=float))
        dw = s * (1.0 - s) * (1.0 - 2.0 * s)
        X = self.features
        return np.einsum("i,ik,ia,ib->kab", dw, X, X, X)


def leapfrog_trajectory(kernel, x0, p0, mass, tau, n_steps, threshold):
    """Run ``n_steps`` leapfrog steps for H = U(x) + p^T M^{-1} p / 2."""
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    d = x.shape[0]
    xs = np.empty((n_steps + 1, d))
    ps = np.empty((n_steps + 1, d))
    energies = np.empty(n_steps + 1)
    xs[0], ps[0] = x, p
    chol = cholesky(mass)
    if chol is None:
        energies[0] = np.nan
        return xs[:1], ps[:1], energies[:1], STATUS_METRIC_DEGENERATE
    h0 = kernel.potential(x) + 0.5 * (p @ cho_apply_inverse(chol, p))
    energies[0] = h0
    if not np.isfinite(h0):
        return xs[:1], ps[:1], energies[:1], STATUS_DIVERGED
    g = kernel.grad(x)
    for k in range(n_steps):
        p = p - 0.5 * tau * g
        v = cho_apply_inverse(chol, p)
        x = x + tau * v
        g = kernel.grad(x)
        p = p - 0.5 * tau * g
        h = kernel.potential(x) + 0.5 * (p @ cho_apply_inverse(chol, p))
        xs[k + 1], ps[k + 1], energies[k + 1] = x, p, h
        if not np.isfinite(h) or abs(h - h0) > threshold:
            n = k + 2
            return xs[:n], ps[:n], energies[:n], STATUS_DIVERGED
    return xs, ps, energies, STATUS_OK


def _metric_parts(kernel, x):
    chol = cholesky(kernel.metric(x))
    if chol is None:
        return None
    dG = np.asarray(kernel.metric_partials(x), dtype=float)
    trace_term = np.array([np.trace(cho_apply_inverse(chol, dG[k])) for k in range(x.shape[0])])
    return chol, dG, trace_term


def _riemann_dH_dx(g, dG, trace_term, v):
    quad = np.einsum("i,kij,j->k", v, dG, v)
    return g + 0.5 * trace_term - 0.5 * quad


def _riemann_energy(u, chol, p):
    d = p.shape[0]
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return u + 0.5 * (d * LOG_2PI + logdet) + 0.5 * (p @ cho_apply_inverse(chol, p))


def generalized_leapfrog_trajectory(
    kernel, x0, p0, tau, n_steps, fp_tol, fp_max_iter, threshold
):
    """Run ``n_steps`` generalized leapfrog steps for the Riemannian Hamiltonian.

    Each step solves the implicit momentum half-step and the implicit position
    step by fixed-point iteration to max-norm tolerance ``fp_tol``, then applies
    the explicit closing momentum half-step.
    """
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    d = x.shape[0]
    xs = np.empty((n_steps + 1, d))
    ps = np.empty((n_steps + 1, d))
    energies = np.empty(n_steps + 1)
    xs[0], ps[0] = x, p

    parts = _metric_parts(kernel, x)
    if parts is None:
        energies[0] = np.nan
        return xs[:1], ps[:1], energies[:1], STATUS_METRIC_DEGENERATE
    chol, dG, trace_term = parts
    h0 = _riemann_energy(kernel.potential(x), chol, p)
    energies[0] = h0
    if not np.isfinite(h0):
        return xs[:1], ps[:1], energies[:1], STATUS_DIVERGED
    g = kernel.grad(x)

    def fail(k, status):
        n = k + 1
        return xs[:n], ps[:n], energies[:n], status

    for k in range(n_steps):
        # implicit half-step in p at fixed x
        p_half = p
        for _ in range(fp_max_iter):
            v = cho_apply_inverse(chol, p_half)
            p_new = p - 0.5 * tau * _riemann_dH_dx(g, dG, trace_term, v)
            delta = np.max(np.abs(p_new - p_half))
            p_half = p_new
            if delta < fp_tol:
                break
        else:
            return fail(k, STATUS_FIXED_POINT_FAILED)

        # implicit position step at fixed p_half
        v0 = cho_apply_inverse(chol, p_half)
        x_new = x
        for _ in range(fp_max_iter):
            chol_new = cholesky(kernel.metric(x_new))
            if chol_new is None:
                return fail(k, STATUS_METRIC_DEGENERATE)
            x_next = x + 0.5 * tau * (v0 + cho_apply_inverse(chol_new, p_half))
            delta = np.max(np.abs(x_next - x_new))
            x_new = x_next
            if delta < fp_tol:
                break
        else:
            return fail(k, STATUS_FIXED_POINT_FAILED)

        x = x_new
        parts = _metric_parts(kernel, x)
        if parts is None:
            return fail(k, STATUS_METRIC_DEGENERATE)
        chol, dG, trace_term = parts
        g = kernel.grad(x)
        v = cho_apply_inverse(chol, p_half)
        p = p_half - 0.5 * tau * _riemann_dH_dx(g, dG, trace_term, v)
        h = _riemann_energy(kernel.potential(x), chol, p)
        xs[k + 1], ps[k + 1], energies[k + 1] = x, p, h
        if not np.isfinite(h) or abs(h - h0) > threshold:
            return fail(k + 1, STATUS_DIVERGED)
    return xs, ps, energies, STATUS_OK
