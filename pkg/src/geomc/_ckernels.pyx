# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: built-in target densities and trajectory loops.

Function-for-function mirror of ``geomc._pykernels``. All dense linear algebra
is done on small row-major buffers with hand-written Cholesky and triangular
solves; the inverse of a metric is never formed.
"""

import numpy as np

from libc.math cimport exp, fabs, isfinite, log, log1p, sqrt

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_FIXED_POINT_FAILED = 2
STATUS_METRIC_DEGENERATE = 3

cdef double LOG_2PI = log(2.0 * 3.14159265358979323846)


# --------------------------------------------------------------------------
# small dense linear algebra

cdef int _chol_plain(const double* a, double* L, int d) noexcept:
    cdef int i, j, k
    cdef double s
    for i in range(d * d):
        L[i] = 0.0
    for j in range(d):
        s = a[j * d + j]
        for k in range(j):
            s -= L[j * d + k] * L[j * d + k]
        if not (s > 0.0) or not isfinite(s):
            return -1
        L[j * d + j] = sqrt(s)
        for i in range(j + 1, d):
            s = a[i * d + j]
            for k in range(j):
                s -= L[i * d + k] * L[j * d + k]
            L[i * d + j] = s / L[j * d + j]
    return 0


cdef int _cholesky(const double* a, double* L, double* work, int d) noexcept:
    """Lower factor with one jitter retry of 1e-10 * trace / d; ``work`` is d*d."""
    cdef int i
    cdef double tr = 0.0
    if _chol_plain(a, L, d) == 0:
        return 0
    for i in range(d):
        tr += a[i * d + i]
    for i in range(d * d):
        work[i] = a[i]
    for i in range(d):
        work[i * d + i] += 1e-10 * tr / d
    return _chol_plain(work, L, d)


cdef void _cho_solve(const double* L, const double* b, double* out, int d) noexcept:
    cdef int i, j
    cdef double s
    for i in range(d):
        s = b[i]
        for j in range(i):
            s -= L[i * d + j] * out[j]
        out[i] = s / L[i * d + i]
    for i in range(d - 1, -1, -1):
        s = out[i]
        for j in range(i + 1, d):
            s -= L[j * d + i] * out[j]
        out[i] = s / L[i * d + i]


cdef double _dot(const double* a, const double* b, int d) noexcept:
    cdef int i
    cdef double s = 0.0
    for i in range(d):
        s += a[i] * b[i]
    return s


cdef double _sigmoid(double t) noexcept:
    cdef double e
    if t >= 0.0:
        return 1.0 / (1.0 + exp(-t))
    e = exp(t)
    return e / (1.0 + e)


cdef double _softplus(double t) noexcept:
    if t > 0.0:
        return t + log1p(exp(-t))
    return log1p(exp(t))


# --------------------------------------------------------------------------
# target kernels

cdef class Kernel:
    """Base class; subclasses override the ``cdef`` evaluators."""

    cdef readonly int dim
    cdef readonly bint has_metric

    cdef double _potential(self, const double* x) noexcept:
        return 0.0

    cdef void _grad(self, const double* x, double* out) noexcept:
        pass

    cdef void _hessian(self, const double* x, double* out) noexcept:
        pass

    cdef void _metric(self, const double* x, double* out) noexcept:
        pass

    cdef void _metric_partials(self, const double* x, double* out) noexcept:
        pass

    cdef double[::1] _vec(self, x):
        cdef double[::1] v = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
        if v.shape[0] != self.dim:
            raise ValueError(f"expected a position of length {self.dim}, got {v.shape[0]}")
        return v

    def potential(self, x):
        cdef double[::1] v = self._vec(x)
        return self._potential(&v[0])

    def grad(self, x):
        cdef double[::1] v = self._vec(x)
        out = np.empty(self.dim)
        cdef double[::1] o = out
        self._grad(&v[0], &o[0])
        return out

    def hessian(self, x):
        cdef double[::1] v = self._vec(x)
        out = np.empty((self.dim, self.dim))
        cdef double[:, ::1] o = out
        self._hessian(&v[0], &o[0, 0])
        return out

    def metric(self, x):
        cdef double[::1] v = self._vec(x)
        out = np.empty((self.dim, self.dim))
        cdef double[:, ::1] o = out
        self._metric(&v[0], &o[0, 0])
        return out

    def metric_partials(self, x):
        cdef double[::1] v = self._vec(x)
        out = np.empty((self.dim, self.dim, self.dim))
        cdef double[:, :, ::1] o = out
        self._metric_partials(&v[0], &o[0, 0, 0])
        return out


cdef class GaussianKernel(Kernel):
    """U(x) = (x - m)^T P (x - m) / 2 with constant metric P."""

    cdef double[::1] _mean
    cdef double[:, ::1] _prec
    cdef double[::1] _r

    def __init__(self, mean, precision):
        self._mean = np.array(mean, dtype=np.float64)
        self._prec = np.array(precision, dtype=np.float64)
        self.dim = self._mean.shape[0]
        self.has_metric = True
        self._r = np.empty(self.dim)

    @property
    def mean(self):
        return np.asarray(self._mean).copy()

    @property
    def precision(self):
        return np.asarray(self._prec).copy()

    cdef double _potential(self, const double* x) noexcept:
        cdef int i, j, d = self.dim
        cdef double s, total = 0.0
        for i in range(d):
            self._r[i] = x[i] - self._mean[i]
        for i in range(d):
            s = 0.0
            for j in range(d):
                s += self._prec[i, j] * self._r[j]
            total += self._r[i] * s
        return 0.5 * total

    cdef void _grad(self, const double* x, double* out) noexcept:
        cdef int i, j, d = self.dim
        cdef double s
        for i in range(d):
            self._r[i] = x[i] - self._mean[i]
        for i in range(d):
            s = 0.0
            for j in range(d):
                s += self._prec[i, j] * self._r[j]
            out[i] = s

    cdef void _hessian(self, const double* x, double* out) noexcept:
        cdef int i, j, d = self.dim
        for i in range(d):
            for j in range(d):
                out[i * d + j] = self._prec[i, j]

    cdef void _metric(self, const double* x, double* out) noexcept:
        self._hessian(x, out)

    cdef void _metric_partials(self, const double* x, double* out) noexcept:
        cdef int i, d = self.dim
        for i in range(d * d * d):
            out[i] = 0.0


cdef class BananaKernel(Kernel):
    """Twisted Gaussian with Gauss-Newton metric; see ``_pykernels.BananaKernel``."""

    cdef readonly double b
    cdef readonly double sigma1_sq

    def __init__(self, b, sigma1_sq):
        self.b = b
        self.sigma1_sq = sigma1_sq
        self.dim = 2
        self.has_metric = True

    cdef double _potential(self, const double* x) noexcept:
        cdef double r = x[1] + self.b * x[0] * x[0] - self.sigma1_sq * self.b
        return x[0] * x[0] / (2.0 * self.sigma1_sq) + 0.5 * r * r

    cdef void _grad(self, const double* x, double* out) noexcept:
        cdef double r = x[1] + self.b * x[0] * x[0] - self.sigma1_sq * self.b
        out[0] = x[0] / self.sigma1_sq + 2.0 * self.b * x[0] * r
        out[1] = r

    cdef void _hessian(self, const double* x, double* out) noexcept:
        cdef double r = x[1] + self.b * x[0] * x[0] - self.sigma1_sq * self.b
        cdef double off = 2.0 * self.b * x[0]
        out[0] = 1.0 / self.sigma1_sq + 2.0 * self.b * r + off * off
        out[1] = off
        out[2] = off
        out[3] = 1.0

    cdef void _metric(self, const double* x, double* out) noexcept:
        cdef double off = 2.0 * self.b * x[0]
        out[0] = 1.0 / self.sigma1_sq + off * off
        out[1] = off
        out[2] = off
        out[3] = 1.0

    cdef void _metric_partials(self, const double* x, double* out) noexcept:
        cdef int i
        for i in range(8):
            out[i] = 0.0
        out[0] = 8.0 * self.b * self.b * x[0]
        out[1] = 2.0 * self.b
        out[2] = 2.0 * self.b


cdef class LogRegKernel(Kernel):
    """Logistic-regression posterior with Fisher-plus-prior metric."""

    cdef double[:, ::1] _X
    cdef double[::1] _y
    cdef readonly double alpha
    cdef readonly int n
    cdef double[::1] _s

    def __init__(self, features, labels, alpha):
        self._X = np.array(features, dtype=np.float64)
        self._y = np.array(labels, dtype=np.float64)
        self.alpha = alpha
        self.n = self._X.shape[0]
        self.dim = self._X.shape[1]
        self.has_metric = True
        self._s = np.empty(self.n)

    @property
    def features(self):
        return np.asarray(self._X).copy()

    @property
    def labels(self):
        return np.asarray(self._y).copy()

    cdef double _eta(self, const double* x, int i) noexcept:
        cdef int k
        cdef double s = 0.0
        for k in range(self.dim):
            s += self._X[i, k] * x[k]
        return s

    cdef double _potential(self, const double* x) noexcept:
        cdef int i
        cdef double eta, total = 0.0
        for i in range(self.n):
            eta = self._eta(x, i)
            total += _softplus(eta) - self._y[i] * eta
        return total + 0.5 * self.alpha * _dot(x, x, self.dim)

    cdef void _grad(self, const double* x, double* out) noexcept:
        cdef int i, k, d = self.dim
        cdef double r
        for k in range(d):
            out[k] = self.alpha * x[k]
        for i in range(self.n):
            r = _sigmoid(self._eta(x, i)) - self._y[i]
            for k in range(d):
                out[k] += self._X[i, k] * r

    cdef void _metric(self, const double* x, double* out) noexcept:
        cdef int i, a, b, d = self.dim
        cdef double s, w
        for a in range(d * d):
            out[a] = 0.0
        for a in range(d):
            out[a * d + a] = self.alpha
        for i in range(self.n):
            s = _sigmoid(self._eta(x, i))
            w = s * (1.0 - s)
            for a in range(d):
                for b in range(d):
                    out[a * d + b] += w * self._X[i, a] * self._X[i, b]

    cdef void _hessian(self, const double* x, double* out) noexcept:
        self._metric(x, out)

    cdef void _metric_partials(self, const double* x, double* out) noexcept:
        cdef int i, k, a, b, d = self.dim
        cdef double s, dw
        for a in range(d * d * d):
            out[a] = 0.0
        for i in range(self.n):
            s = _sigmoid(self._eta(x, i))
            dw = s * (1.0 - s) * (1.0 - 2.0 * s)
            for k in range(d):
                for a in range(d):
                    for b in range(d):
                        out[(k * d + a) * d + b] += dw * self._X[i, k] * self._X[i, a] * self._X[i, b]


# --------------------------------------------------------------------------
# trajectories

def leapfrog_trajectory(Kernel kernel, x0, p0, mass, double tau, int n_steps, double threshold):
    """Run ``n_steps`` leapfrog steps for H = U(x) + p^T M^{-1} p / 2."""
    cdef int d = kernel.dim
    cdef int i, k
    cdef double h, h0
    xs_arr = np.empty((n_steps + 1, d))
    ps_arr = np.empty((n_steps + 1, d))
    en_arr = np.empty(n_steps + 1)
    cdef double[:, ::1] xs = xs_arr
    cdef double[:, ::1] ps = ps_arr
    cdef double[::1] en = en_arr
    cdef double[:, ::1] m = np.ascontiguousarray(mass, dtype=np.float64)
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double[::1] p = np.array(p0, dtype=np.float64)
    cdef double[::1] g = np.empty(d)
    cdef double[::1] v = np.empty(d)
    cdef double[:, ::1] L = np.empty((d, d))
    cdef double[:, ::1] work = np.empty((d, d))
    if x.shape[0] != d or p.shape[0] != d or m.shape[0] != d or m.shape[1] != d:
        raise ValueError("dimension mismatch")

    xs[0, :] = x
    ps[0, :] = p
    if _cholesky(&m[0, 0], &L[0, 0], &work[0, 0], d) != 0:
        en[0] = np.nan
        return xs_arr[:1], ps_arr[:1], en_arr[:1], STATUS_METRIC_DEGENERATE
    _cho_solve(&L[0, 0], &p[0], &v[0], d)
    h0 = kernel._potential(&x[0]) + 0.5 * _dot(&p[0], &v[0], d)
    en[0] = h0
    if not isfinite(h0):
        return xs_arr[:1], ps_arr[:1], en_arr[:1], STATUS_DIVERGED
    kernel._grad(&x[0], &g[0])
    for k in range(n_steps):
        for i in range(d):
            p[i] = p[i] - 0.5 * tau * g[i]
        _cho_solve(&L[0, 0], &p[0], &v[0], d)
        for i in range(d):
            x[i] = x[i] + tau * v[i]
        kernel._grad(&x[0], &g[0])
        for i in range(d):
            p[i] = p[i] - 0.5 * tau * g[i]
        _cho_solve(&L[0, 0], &p[0], &v[0], d)
        h = kernel._potential(&x[0]) + 0.5 * _dot(&p[0], &v[0], d)
        xs[k + 1, :] = x
        ps[k + 1, :] = p
        en[k + 1] = h
        if not isfinite(h) or fabs(h - h0) > threshold:
            return xs_arr[:k + 2], ps_arr[:k + 2], en_arr[:k + 2], STATUS_DIVERGED
    return xs_arr, ps_arr, en_arr, STATUS_OK


cdef int _metric_parts(Kernel kernel, const double* x, double* G, double* L,
                       double* work, double* dG, double* tr, double* col, int d) noexcept:
    """Factor G(x), fill dG and tr_k = trace(G^{-1} dG_k). Returns -1 if degenerate."""
    cdef int k, j
    kernel._metric(x, G)
    if _cholesky(G, L, work, d) != 0:
        return -1
    kernel._metric_partials(x, dG)
    for k in range(d):
        tr[k] = 0.0
        # dG_k is symmetric, so row j doubles as column j
        for j in range(d):
            _cho_solve(L, &dG[(k * d + j) * d], col, d)
            tr[k] += col[j]
    return 0


cdef void _riemann_dH_dx(const double* g, const double* dG, const double* tr,
                         const double* v, double* out, int d) noexcept:
    cdef int k, a, b
    cdef double quad, s
    for k in range(d):
        quad = 0.0
        for a in range(d):
            s = 0.0
            for b in range(d):
                s += dG[(k * d + a) * d + b] * v[b]
            quad += v[a] * s
        out[k] = g[k] + 0.5 * tr[k] - 0.5 * quad


cdef double _riemann_energy(double u, const double* L, const double* p, double* v, int d) noexcept:
    cdef int i
    cdef double logdet = 0.0
    for i in range(d):
        logdet += log(L[i * d + i])
    _cho_solve(L, p, v, d)
    return u + 0.5 * (d * LOG_2PI + 2.0 * logdet) + 0.5 * _dot(p, v, d)


def generalized_leapfrog_trajectory(Kernel kernel, x0, p0, double tau, int n_steps,
                                    double fp_tol, int fp_max_iter, double threshold):
    """Run ``n_steps`` generalized leapfrog steps for the Riemannian Hamiltonian."""
    if not kernel.has_metric:
        raise ValueError("kernel has no metric")
    cdef int d = kernel.dim
    cdef int i, k, it
    cdef bint converged
    cdef double h, h0, delta, t
    xs_arr = np.empty((n_steps + 1, d))
    ps_arr = np.empty((n_steps + 1, d))
    en_arr = np.empty(n_steps + 1)
    cdef double[:, ::1] xs = xs_arr
    cdef double[:, ::1] ps = ps_arr
    cdef double[::1] en = en_arr
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double[::1] p = np.array(p0, dtype=np.float64)
    if x.shape[0] != d or p.shape[0] != d:
        raise ValueError("dimension mismatch")
    cdef double[::1] ph = np.empty(d)
    cdef double[::1] pn = np.empty(d)
    cdef double[::1] xn = np.empty(d)
    cdef double[::1] xt = np.empty(d)
    cdef double[::1] g = np.empty(d)
    cdef double[::1] v = np.empty(d)
    cdef double[::1] v0 = np.empty(d)
    cdef double[::1] f = np.empty(d)
    cdef double[::1] tr = np.empty(d)
    cdef double[::1] col = np.empty(d)
    cdef double[:, ::1] G = np.empty((d, d))
    cdef double[:, ::1] L = np.empty((d, d))
    cdef double[:, ::1] L1 = np.empty((d, d))
    cdef double[:, ::1] work = np.empty((d, d))
    cdef double[:, :, ::1] dG = np.empty((d, d, d))

    xs[0, :] = x
    ps[0, :] = p
    if _metric_parts(kernel, &x[0], &G[0, 0], &L[0, 0], &work[0, 0], &dG[0, 0, 0],
                     &tr[0], &col[0], d) != 0:
        en[0] = np.nan
        return xs_arr[:1], ps_arr[:1], en_arr[:1], STATUS_METRIC_DEGENERATE
    h0 = _riemann_energy(kernel._potential(&x[0]), &L[0, 0], &p[0], &v[0], d)
    en[0] = h0
    if not isfinite(h0):
        return xs_arr[:1], ps_arr[:1], en_arr[:1], STATUS_DIVERGED
    kernel._grad(&x[0], &g[0])

    for k in range(n_steps):
        # implicit half-step in p at fixed x
        for i in range(d):
            ph[i] = p[i]
        converged = False
        for it in range(fp_max_iter):
            _cho_solve(&L[0, 0], &ph[0], &v[0], d)
            _riemann_dH_dx(&g[0], &dG[0, 0, 0], &tr[0], &v[0], &f[0], d)
            delta = 0.0
            for i in range(d):
                pn[i] = p[i] - 0.5 * tau * f[i]
                t = fabs(pn[i] - ph[i])
                if t > delta or t != t:
                    delta = t
                ph[i] = pn[i]
            if delta < fp_tol:
                converged = True
                break
        if not converged:
            return xs_arr[:k + 1], ps_arr[:k + 1], en_arr[:k + 1], STATUS_FIXED_POINT_FAILED

        # implicit position step at fixed p_half
        _cho_solve(&L[0, 0], &ph[0], &v0[0], d)
        for i in range(d):
            xn[i] = x[i]
        converged = False
        for it in range(fp_max_iter):
            kernel._metric(&xn[0], &G[0, 0])
            if _cholesky(&G[0, 0], &L1[0, 0], &work[0, 0], d) != 0:
                return xs_arr[:k + 1], ps_arr[:k + 1], en_arr[:k + 1], STATUS_METRIC_DEGENERATE
            _cho_solve(&L1[0, 0], &ph[0], &v[0], d)
            delta = 0.0
            for i in range(d):
                xt[i] = x[i] + 0.5 * tau * (v0[i] + v[i])
                t = fabs(xt[i] - xn[i])
                if t > delta or t != t:
                    delta = t
                xn[i] = xt[i]
            if delta < fp_tol:
                converged = True
                break
        if not converged:
            return xs_arr[:k + 1], ps_arr[:k + 1], en_arr[:k + 1], STATUS_FIXED_POINT_FAILED

        # explicit closing half-step in p at the new position
        for i in range(d):
            x[i] = xn[i]
        if _metric_parts(kernel, &x[0], &G[0, 0], &L[0, 0], &work[0, 0], &dG[0, 0, 0],
                         &tr[0], &col[0], d) != 0:
            return xs_arr[:k + 1], ps_arr[:k + 1], en_arr[:k + 1], STATUS_METRIC_DEGENERATE
        kernel._grad(&x[0], &g[0])
        _cho_solve(&L[0, 0], &ph[0], &v[0], d)
        _riemann_dH_dx(&g[0], &dG[0, 0, 0], &tr[0], &v[0], &f[0], d)
        for i in range(d):
            p[i] = ph[i] - 0.5 * tau * f[i]
        h = _riemann_energy(kernel._potential(&x[0]), &L[0, 0], &p[0], &v[0], d)
        xs[k + 1, :] = x
        ps[k + 1, :] = p
        en[k + 1] = h
        if not isfinite(h) or fabs(h - h0) > threshold:
            return xs_arr[:k + 2], ps_arr[:k + 2], en_arr[:k + 2], STATUS_DIVERGED
    return xs_arr, ps_arr, en_arr, STATUS_OK
