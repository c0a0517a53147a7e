"""Poisson brackets and the fourth-order shadow Hamiltonian of leapfrog.

For a Euclidean system with ``K = p^T G^{-1} p / 2`` the two nested brackets
that appear at order ``tau^2`` have closed forms::

    {U, {U, K}} = grad U^T G^{-1} grad U
    {K, {K, U}} = p^T G^{-1} Hess U G^{-1} p

and ``H4 = H + tau^2 (c_UUK {U,{U,K}} + c_KKU {K,{K,U}})``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._pykernels import cho_apply_inverse
from .errors import DivergedError
from .hamiltonians import HamiltonianSystem, Phase
from .integrators import IntegratorConfig, integrate
from .targets import grad_potential, hessian_potential


@dataclass(frozen=True)
class ShadowCoefficients:
    """Coefficients of the two order-``tau^2`` brackets."""

    c_UUK: float = -1.0 / 24.0
    c_KKU: float = 1.0 / 12.0


DEFAULT_COEFFICIENTS = ShadowCoefficients()


def _require_euclidean(sys):
    if not sys.is_euclidean:
        raise ValueError("shadow Hamiltonians are defined for Euclidean systems only")


def bracket_UUK(sys: HamiltonianSystem, z: Phase) -> float:
    """``{U, {U, K}}`` at ``z``; depends on the position only."""
    _require_euclidean(sys)
    g = grad_potential(sys.target, z.x)
    return float(g @ cho_apply_inverse(sys.chol(z.x), g))


def bracket_KKU(sys: HamiltonianSystem, z: Phase) -> float:
    """``{K, {K, U}}`` at ``z``."""
    _require_euclidean(sys)
    v = cho_apply_inverse(sys.chol(z.x), z.p)
    return float(v @ hessian_potential(sys.target, z.x) @ v)


def shadow4(sys: HamiltonianSystem, z: Phase, tau: float, coefficients: ShadowCoefficients = DEFAULT_COEFFICIENTS) -> float:
    """Fourth-order shadow Hamiltonian ``H4(z)`` for step size ``tau``."""
    h = sys.energy(z)
    if tau == 0:
        return h
    correction = coefficients.c_UUK * bracket_UUK(sys, z) + coefficients.c_KKU * bracket_KKU(sys, z)
    return h + tau * tau * correction


def shadow_energies(sys, xs, ps, energies, tau, coefficients: ShadowCoefficients = DEFAULT_COEFFICIENTS) -> np.ndarray:
    """``H4`` along recorded phases, reusing the energies already computed."""
    _require_euclidean(sys)
    out = np.empty(len(energies))
    for k, (x, p) in enumerate(zip(xs, ps)):
        z = Phase(x, p)
        correction = coefficients.c_UUK * bracket_UUK(sys, z) + coefficients.c_KKU * bracket_KKU(sys, z)
        out[k] = energies[k] + tau * tau * correction
    return out


@dataclass
class ScanRow:
    tau: float
    max_dH: float
    max_dHshadow: float


def shadow_conservation_scan(sys: HamiltonianSystem, z0: Phase, taus, total_time: float = 2.0, coefficients=DEFAULT_COEFFICIENTS):
    """Max energy and shadow-energy drift along leapfrog runs of fixed duration.

    Args:
        sys: Euclidean system.
        z0: Starting phase.
        taus: Step sizes to test; each run uses ``round(total_time / tau)`` steps.
        total_time: Integration time shared by all runs.

    Returns:
        A list of :class:`ScanRow`, one per ``tau``.

    Raises:
        DivergedError: if any run diverges.
    """
    _require_euclidean(sys)
    rows = []
    for tau in taus:
        tau = float(tau)
        n_steps = max(1, int(round(total_time / tau)))
        traj = integrate(sys, z0, IntegratorConfig(tau=tau, n_steps=n_steps))
        if traj.diverged:
            raise DivergedError(f"trajectory diverged at tau={tau}")
        shadow = shadow_energies(sys, traj.xs, traj.ps, traj.energies, tau, coefficients)
        rows.append(
            ScanRow(
                tau,
                float(np.max(np.abs(traj.energies - traj.energies[0]))),
                float(np.max(np.abs(shadow - shadow[0]))),
            )
        )
    return rows
