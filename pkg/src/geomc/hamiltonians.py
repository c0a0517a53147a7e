"""Phase-space states and Euclidean / Riemannian Hamiltonian systems.

Euclidean:  ``H(x, p) = U(x) + p^T G^{-1} p / 2`` with a constant mass matrix ``G``.
Riemannian: ``H(x, p) = U(x) + log((2 pi)^d |G(x)|) / 2 + p^T G(x)^{-1} p / 2``.

All ``G^{-1} v`` products go through Cholesky factors; no inverse is formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._pykernels import LOG_2PI, cho_apply_inverse, cholesky
from .errors import MetricDegenerateError
from .targets import MetricField, TargetModel, grad_potential, potential

EUCLIDEAN = "euclidean"
RIEMANNIAN = "riemannian"


@dataclass(frozen=True)
class Phase:
    """A point ``(x, p)`` in phase space."""

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        p = np.array(self.p, dtype=float).reshape(-1)
        if x.shape != p.shape:
            raise ValueError(f"x and p lengths differ: {x.shape[0]} vs {p.shape[0]}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    def flip(self) -> "Phase":
        return Phase(self.x, -self.p)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.p])

    @classmethod
    def from_vector(cls, z) -> "Phase":
        z = np.asarray(z, dtype=float)
        d = z.shape[0] // 2
        return cls(z[:d], z[d:])


class HamiltonianSystem:
    """Energy and phase-space derivatives for a target plus kinetic energy.

    Use :meth:`euclidean` or :meth:`riemannian` to construct.

    Attributes:
        kind: ``"euclidean"`` or ``"riemannian"``.
        target: The :class:`TargetModel` supplying ``U``.
        mass: Constant mass matrix (Euclidean only).
        metric: :class:`MetricField` (Riemannian only).
    """

    def __init__(self, target: TargetModel, kind: str = EUCLIDEAN, mass=None, metric=None):
        if kind not in (EUCLIDEAN, RIEMANNIAN):
            raise ValueError(f"unknown Hamiltonian kind '{kind}'")
        self.target = target
        self.kind = kind
        self.dim = target.dim
        self.mass = None
        self.metric = None
        self._mass_chol = None
        self._cache_key = None
        self._cache = None
        if kind == EUCLIDEAN:
            mass = np.eye(self.dim) if mass is None else np.atleast_2d(np.asarray(mass, dtype=float))
            if mass.shape != (self.dim, self.dim):
                raise ValueError(f"mass must be {self.dim}x{self.dim}, got {mass.shape}")
            if not np.allclose(mass, mass.T):
                raise ValueError("mass matrix must be symmetric")
            chol = cholesky(mass)
            if chol is None:
                raise MetricDegenerateError("mass matrix is not positive definite")
            self.mass = mass
            self._mass_chol = chol
        else:
            metric = target.metric if metric is None else metric
            if metric is None:
                raise ValueError("Riemannian system needs a metric field")
            self.metric = metric

    @classmethod
    def euclidean(cls, target: TargetModel, mass=None) -> "HamiltonianSystem":
        return cls(target, EUCLIDEAN, mass=mass)

    @classmethod
    def riemannian(cls, target: TargetModel, metric: MetricField | None = None) -> "HamiltonianSystem":
        return cls(target, RIEMANNIAN, metric=metric)

    @property
    def is_euclidean(self) -> bool:
        return self.kind == EUCLIDEAN

    @property
    def uses_target_metric(self) -> bool:
        """True when a Riemannian system's metric is the target's built-in field."""
        return self.kind == RIEMANNIAN and self.metric is self.target.metric

    def chol(self, x) -> np.ndarray:
        """Lower Cholesky factor of ``G`` (Euclidean) or ``G(x)`` (Riemannian).

        Raises:
            MetricDegenerateError: if factorization fails after one jitter retry.
        """
        if self.kind == EUCLIDEAN:
            return self._mass_chol
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        if key == self._cache_key:
            return self._cache
        chol = cholesky(self.metric.value(x))
        if chol is None:
            raise MetricDegenerateError(f"metric degenerate at x={x.tolist()}")
        self._cache_key, self._cache = key, chol
        return chol

    def log_det_term(self, x) -> float:
        """``log((2 pi)^d |G(x)|) / 2``; zero for Euclidean systems."""
        if self.kind == EUCLIDEAN:
            return 0.0
        chol = self.chol(x)
        return 0.5 * (self.dim * LOG_2PI + 2.0 * float(np.sum(np.log(np.diag(chol)))))

    def kinetic(self, z: Phase) -> float:
        """Quadratic part ``p^T G^{-1} p / 2``."""
        return 0.5 * float(z.p @ cho_apply_inverse(self.chol(z.x), z.p))

    def energy(self, z: Phase) -> float:
        """Total energy ``H(z)``."""
        return potential(self.target, z.x) + self.log_det_term(z.x) + self.kinetic(z)

    def dH_dp(self, z: Phase) -> np.ndarray:
        """Velocity ``G^{-1} p`` (or ``G(x)^{-1} p``)."""
        return cho_apply_inverse(self.chol(z.x), z.p)

    def dH_dx(self, z: Phase) -> np.ndarray:
        """Force term ``dH/dx``.

        Riemannian systems add ``tr(G^{-1} dG_k) / 2 - v^T dG_k v / 2`` to
        ``dU/dx^k``, where ``v = G^{-1} p``.
        """
        g = grad_potential(self.target, z.x)
        if self.kind == EUCLIDEAN:
            return g
        chol = self.chol(z.x)
        dG = self.metric.stacked_partials(z.x)
        trace_term = np.array([np.trace(cho_apply_inverse(chol, dG[k])) for k in range(self.dim)])
        v = cho_apply_inverse(chol, z.p)
        quad = np.einsum("i,kij,j->k", v, dG, v)
        return g + 0.5 * trace_term - 0.5 * quad

    def sample_momentum(self, x, rng: np.random.Generator) -> np.ndarray:
        """Draw ``p ~ N(0, G)`` (or ``N(0, G(x))``) as ``L eta`` with ``eta`` standard normal."""
        eta = rng.standard_normal(self.dim)
        return self.chol(x) @ eta

    def random_phase(self, rng: np.random.Generator, scale: float = 1.0) -> Phase:
        """Seeded test phase: ``x ~ N(0, scale^2 I)``, then ``p ~ N(0, G(x))``."""
        x = scale * rng.standard_normal(self.dim)
        return Phase(x, self.sample_momentum(x, rng))
