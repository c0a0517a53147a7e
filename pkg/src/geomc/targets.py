"""Target densities, their derivatives, and Riemannian metric fields.

A :class:`TargetModel` stores the unnormalized log-density ``log pi~`` and its
first two derivatives; the potential energy is ``U = -log pi~``. Built-in
targets are backed by a kernel object from the selected backend so trajectory
loops can run without returning to Python at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from ._backend import kernels
from .errors import UnsupportedPointError

# Fixed four-point logistic-regression dataset used in tests and demos.
DESK_FEATURES = np.array([[1.0, -1.0], [1.0, -0.5], [1.0, 0.5], [1.0, 1.0]])
DESK_LABELS = np.array([0.0, 0.0, 1.0, 1.0])
DESK_ALPHA = 1.0


@dataclass(frozen=True)
class MetricField:
    """Position-dependent SPD metric ``G(x)`` and its coordinate partials.

    Attributes:
        value: Maps a position to the ``dim x dim`` matrix ``G(x)``.
        partials: Maps ``(x, k)`` to ``dG/dx^k``.
        all_partials: Optional vectorized form returning the stacked
            ``(dim, dim, dim)`` array with ``[k]`` equal to ``dG/dx^k``.
        constant_value: The matrix itself when the field is constant, which
            lets integrators use the explicit leapfrog.
    """

    value: Callable[[np.ndarray], np.ndarray]
    partials: Callable[[np.ndarray, int], np.ndarray]
    all_partials: Optional[Callable[[np.ndarray], np.ndarray]] = None
    constant_value: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def stacked_partials(self, x):
        if self.all_partials is not None:
            return np.asarray(self.all_partials(x), dtype=float)
        return np.stack([self.partials(x, k) for k in range(np.shape(x)[0])])

    @classmethod
    def constant(cls, matrix):
        """Metric field that equals ``matrix`` everywhere."""
        matrix = np.array(matrix, dtype=float)
        d = matrix.shape[0]
        return cls(
            value=lambda x: matrix.copy(),
            partials=lambda x, k: np.zeros((d, d)),
            all_partials=lambda x: np.zeros((d, d, d)),
            constant_value=matrix,
        )


@dataclass(frozen=True)
class TargetModel:
    """Unnormalized target density with analytic derivatives.

    Attributes:
        dim: Dimension of the position space.
        log_density_unnorm: ``x -> log pi~(x)``.
        grad: ``x -> grad log pi~(x)``.
        hessian: ``x -> Hessian of log pi~ at x``.
        metric: Optional Riemannian metric field.
        name: Short label used in reports.
        kernel: Backend kernel object for built-in targets, else ``None``.
    """

    dim: int
    log_density_unnorm: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    metric: Optional[MetricField] = None
    name: str = "custom"
    kernel: Any = field(default=None, repr=False, compare=False)


def potential(model: TargetModel, x) -> float:
    """Potential energy ``U(x) = -log pi~(x)``.

    Raises:
        UnsupportedPointError: if the density is not finite at ``x``.
    """
    x = _check_position(model, x)
    u = -model.log_density_unnorm(x)
    if not np.isfinite(u):
        raise UnsupportedPointError(f"log density is not finite at x={x.tolist()}")
    return float(u)


def grad_potential(model: TargetModel, x) -> np.ndarray:
    """Gradient of the potential, ``-grad log pi~(x)``."""
    x = _check_position(model, x)
    g = -np.asarray(model.grad(x), dtype=float)
    if not np.all(np.isfinite(g)):
        raise UnsupportedPointError(f"gradient is not finite at x={x.tolist()}")
    return g


def hessian_potential(model: TargetModel, x) -> np.ndarray:
    """Hessian of the potential, ``-Hess log pi~(x)``."""
    x = _check_position(model, x)
    return -np.asarray(model.hessian(x), dtype=float)


def _check_position(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"position must have shape ({model.dim},), got {x.shape}")
    return x


def from_kernel(kernel, name: str) -> TargetModel:
    """Wrap a backend kernel (which works in terms of U) as a :class:`TargetModel`."""
    metric = None
    if kernel.has_metric:
        metric = MetricField(
            value=kernel.metric,
            partials=lambda x, k: kernel.metric_partials(x)[k],
            all_partials=kernel.metric_partials,
        )
    return TargetModel(
        dim=kernel.dim,
        log_density_unnorm=lambda x: -kernel.potential(x),
        grad=lambda x: -kernel.grad(x),
        hessian=lambda x: -kernel.hessian(x),
        metric=metric,
        name=name,
        kernel=kernel,
    )


def make_gaussian(mean, covariance) -> TargetModel:
    """Multivariate normal target ``N(mean, covariance)``.

    The attached metric is the constant precision matrix.

    Raises:
        ValueError: if ``covariance`` is not symmetric positive definite.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    d = mean.shape[0]
    if cov.shape != (d, d):
        raise ValueError(f"covariance must have shape ({d}, {d}), got {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * np.max(np.abs(cov))):
        raise ValueError("covariance must be symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance must be positive definite") from None
    eye = np.eye(d)
    precision = np.linalg.solve(chol.T, np.linalg.solve(chol, eye))
    precision = 0.5 * (precision + precision.T)
    return from_kernel(kernels.GaussianKernel(mean, precision), "gaussian")


def make_banana(b: float, sigma1_sq: float) -> TargetModel:
    """Twisted 2-d Gaussian with potential
    ``x1^2 / (2 sigma1_sq) + (x2 + b x1^2 - sigma1_sq b)^2 / 2``.

    With ``b = 0`` this is ``N(0, diag(sigma1_sq, 1))``. The attached metric is the
    Gauss-Newton metric of the underlying transformation to a Gaussian.
    """
    if not sigma1_sq > 0:
        raise ValueError("sigma1_sq must be positive")
    return from_kernel(kernels.BananaKernel(float(b), float(sigma1_sq)), "banana")


def make_logreg(features, labels, prior_precision: float = 1.0) -> TargetModel:
    """Bayesian logistic-regression posterior with prior ``N(0, I / prior_precision)``.

    The metric is ``X^T diag(s (1 - s)) X + prior_precision * I`` where ``s`` are
    the fitted success probabilities.

    Args:
        features: ``n x dim`` design matrix.
        labels: ``n`` binary labels in ``{0, 1}``.
        prior_precision: Prior precision ``alpha > 0``.
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=float).reshape(-1)
    if X.shape[0] == 0 or X.size == 0:
        raise ValueError("empty dataset")
    if y.shape[0] != X.shape[0]:
        raise ValueError("features and labels have different lengths")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if not prior_precision > 0:
        raise ValueError("prior_precision must be positive")
    return from_kernel(kernels.LogRegKernel(X, y, float(prior_precision)), "logreg")


def make_desk_logreg() -> TargetModel:
    """Logistic regression on the fixed four-point dataset with ``alpha = 1``."""
    return make_logreg(DESK_FEATURES, DESK_LABELS, DESK_ALPHA)


def make_target(name: str, **params) -> TargetModel:
    """Construct a built-in target by name (``gaussian``, ``banana``, ``logreg``)."""
    if name == "gaussian":
        dim = int(params.get("dim", 2))
        mean = params.get("mean")
        cov = params.get("cov")
        mean = np.zeros(dim) if mean is None else mean
        cov = np.eye(dim) if cov is None else cov
        return make_gaussian(mean, cov)
    if name == "banana":
        return make_banana(params.get("b", 0.1), params.get("sigma1_sq", 100.0))
    if name == "logreg":
        data = params.get("data")
        if data is None:
            return make_logreg(DESK_FEATURES, DESK_LABELS, params.get("alpha", DESK_ALPHA))
        data = np.atleast_2d(np.asarray(data, dtype=float))
        return make_logreg(data[:, :-1], data[:, -1], params.get("alpha", DESK_ALPHA))
    raise ValueError(f"unknown target '{name}'")
