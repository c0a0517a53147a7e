"""Symplectic one-step methods and numerical checks of their structure.

``leapfrog_step`` and ``generalized_leapfrog_step`` are the reference
single-step maps written against :class:`HamiltonianSystem`. ``integrate`` runs
whole trajectories through the selected kernel backend, falling back to the
numpy kernels for targets defined from plain callables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend, _pykernels
from ._pykernels import cho_apply_inverse
from .errors import DivergedError, MetricDegenerateError, UnsupportedPointError
from .hamiltonians import HamiltonianSystem, Phase

DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size, number of steps and implicit-solver controls.

    Attributes:
        tau: Step size (> 0 for sampling; 0 and negative values are allowed in checks).
        n_steps: Number of steps ``L``.
        fp_tol: Max-norm tolerance for fixed-point iterations.
        fp_max_iter: Iteration cap per implicit stage.
        threshold: ``|H - H0|`` above which a trajectory is marked diverged.
    """

    tau: float = 0.1
    n_steps: int = 10
    fp_tol: float = 1e-10
    fp_max_iter: int = 100
    threshold: float = DIVERGENCE_THRESHOLD

    def __post_init__(self):
        if not np.isfinite(self.tau):
            raise ValueError("tau must be finite")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")
        if not self.fp_tol > 0:
            raise ValueError("fp_tol must be positive")
        if int(self.fp_max_iter) != self.fp_max_iter or self.fp_max_iter < 1:
            raise ValueError("fp_max_iter must be a positive integer")


@dataclass
class Trajectory:
    """Recorded output of :func:`integrate`.

    ``xs``/``ps`` have one row per recorded phase (``L + 1`` unless the run
    stopped early). ``status`` is a backend status code; anything other than
    zero means the trajectory diverged. ``energies`` includes
    ``energy_offset``, a constant part of H (the log-determinant of a constant
    metric) that :attr:`delta_H` leaves out so it cannot perturb the difference.
    """

    xs: np.ndarray
    ps: np.ndarray
    energies: np.ndarray
    status: int = _pykernels.STATUS_OK
    shadow_energies: Optional[np.ndarray] = None
    energy_offset: float = 0.0
    _raw_energies: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def delta_H(self) -> float:
        """``H(end) - H(start)``."""
        e = self.energies if self._raw_energies is None else self._raw_energies
        return float(e[-1] - e[0])

    @property
    def diverged(self) -> bool:
        return self.status != _pykernels.STATUS_OK

    @property
    def phases(self):
        return [Phase(x, p) for x, p in zip(self.xs, self.ps)]

    @property
    def end(self) -> Phase:
        return Phase(self.xs[-1], self.ps[-1])

    def __len__(self):
        return self.xs.shape[0]


def momentum_flip(z: Phase) -> Phase:
    """Negate the momentum."""
    return z.flip()


def leapfrog_step(sys: HamiltonianSystem, z: Phase, tau: float) -> Phase:
    """One Stormer-Verlet step: half kick, drift, half kick.

    Raises:
        DivergedError: if the force becomes non-finite.
    """
    if not sys.is_euclidean:
        raise ValueError("leapfrog_step needs a Euclidean system")
    g = _force(sys, z.x)
    p_half = z.p - 0.5 * tau * g
    x1 = z.x + tau * cho_apply_inverse(sys.chol(z.x), p_half)
    g1 = _force(sys, x1)
    return Phase(x1, p_half - 0.5 * tau * g1)


def _force(sys, x):
    g = sys.target.grad(x)
    g = -np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise DivergedError("non-finite gradient")
    return g


def generalized_leapfrog_step(
    sys: HamiltonianSystem,
    z: Phase,
    tau: float,
    fp_tol: float = 1e-10,
    fp_max_iter: int = 100,
) -> Phase:
    """One generalized leapfrog step for a Riemannian system.

    Stage 1 solves ``p' = p - tau/2 dH/dx(x, p')`` and stage 2 solves
    ``x' = x + tau/2 (dH/dp(x, p') + dH/dp(x', p'))``, both by fixed-point
    iteration started from the current value; stage 3 is the explicit kick
    ``p'' = p' - tau/2 dH/dx(x', p')``.

    Raises:
        DivergedError: if either fixed-point solve does not reach ``fp_tol``
            within ``fp_max_iter`` iterations.
        MetricDegenerateError: if the metric cannot be factorized.
    """
    if sys.is_euclidean:
        raise ValueError("generalized_leapfrog_step needs a Riemannian system")
    if tau == 0:
        return Phase(z.x, z.p)
    x, p = z.x, z.p

    p_half = p
    for _ in range(fp_max_iter):
        p_next = p - 0.5 * tau * sys.dH_dx(Phase(x, p_half))
        delta = np.max(np.abs(p_next - p_half))
        p_half = p_next
        if delta < fp_tol:
            break
    else:
        raise DivergedError("momentum fixed-point iteration did not converge")

    v0 = sys.dH_dp(Phase(x, p_half))
    x_new = x
    for _ in range(fp_max_iter):
        x_next = x + 0.5 * tau * (v0 + sys.dH_dp(Phase(x_new, p_half)))
        delta = np.max(np.abs(x_next - x_new))
        x_new = x_next
        if delta < fp_tol:
            break
    else:
        raise DivergedError("position fixed-point iteration did not converge")

    return Phase(x_new, p_half - 0.5 * tau * sys.dH_dx(Phase(x_new, p_half)))


def step(sys: HamiltonianSystem, z: Phase, tau: float, fp_tol=1e-10, fp_max_iter=100) -> Phase:
    """Kind-appropriate single step.

    Built-in targets go through the backend trajectory kernel; others use
    :func:`leapfrog_step` or :func:`generalized_leapfrog_step`.

    Raises:
        DivergedError: if the step fails.
    """
    if _uses_backend(sys) or _constant_metric(sys) is not None:
        traj = integrate(sys, z, IntegratorConfig(tau=tau, n_steps=1, fp_tol=fp_tol, fp_max_iter=fp_max_iter))
        if traj.diverged:
            raise DivergedError(f"step failed with status {traj.status}")
        return traj.end
    if sys.is_euclidean:
        return leapfrog_step(sys, z, tau)
    return generalized_leapfrog_step(sys, z, tau, fp_tol, fp_max_iter)


def _constant_metric(sys):
    """The metric matrix of a Riemannian system whose metric never varies, else ``None``."""
    if sys.is_euclidean:
        return None
    return sys.metric.constant_value


def _uses_backend(sys) -> bool:
    if not _backend.owns(sys.target.kernel):
        return False
    return sys.is_euclidean or sys.uses_target_metric


class _CallableKernel:
    """Adapter exposing a TargetModel (and metric) through the kernel interface."""

    def __init__(self, target, metric=None):
        self.target = target
        self.metric_field = metric
        self.dim = target.dim

    def potential(self, x):
        return -float(self.target.log_density_unnorm(x))

    def grad(self, x):
        return -np.asarray(self.target.grad(x), dtype=float)

    def metric(self, x):
        return self.metric_field.value(x)

    def metric_partials(self, x):
        return self.metric_field.stacked_partials(x)


def integrate(sys: HamiltonianSystem, z0: Phase, config: IntegratorConfig) -> Trajectory:
    """Apply ``config.n_steps`` kind-appropriate steps from ``z0``, recording energies.

    The run stops early, with ``diverged`` set, if ``|H - H0|`` exceeds
    ``config.threshold``, the state becomes non-finite, or an implicit solve fails.
    A degenerate metric is reported through status code 3.
    """
    kernel = sys.target.kernel
    native = _uses_backend(sys)
    fixed = _constant_metric(sys)
    if sys.is_euclidean or fixed is not None:
        # with dG = 0 both implicit stages are explicit: plain leapfrog with mass G
        if _backend.owns(kernel):
            mod = _backend.kernels
        else:
            mod, kernel = _pykernels, _CallableKernel(sys.target)
        mass = sys.mass if fixed is None else fixed
        xs, ps, en, status = mod.leapfrog_trajectory(
            kernel, z0.x, z0.p, mass, float(config.tau), int(config.n_steps), float(config.threshold)
        )
    else:
        if native:
            mod = _backend.kernels
        else:
            mod, kernel = _pykernels, _CallableKernel(sys.target, sys.metric)
        xs, ps, en, status = mod.generalized_leapfrog_trajectory(
            kernel,
            z0.x,
            z0.p,
            float(config.tau),
            int(config.n_steps),
            float(config.fp_tol),
            int(config.fp_max_iter),
            float(config.threshold),
        )
    if status == _pykernels.STATUS_METRIC_DEGENERATE and len(xs) == 1:
        raise MetricDegenerateError(f"metric degenerate at x={list(z0.x)}")
    if fixed is not None:
        offset = sys.log_det_term(z0.x)
        raw = np.asarray(en)
        return Trajectory(np.asarray(xs), np.asarray(ps), raw + offset, int(status), None, offset, raw)
    return Trajectory(np.asarray(xs), np.asarray(ps), np.asarray(en), int(status))


# ---------------------------------------------------------------------------
# structural checks

def canonical_j_inverse(d: int) -> np.ndarray:
    """``J^{-1}`` for ``J = [[0, I], [-I, 0]]``; equals ``-J``."""
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return np.block([[zero, -eye], [eye, zero]])


def step_jacobian(sys, z, tau, fd_step=1e-5, fp_tol=1e-12, fp_max_iter=100) -> np.ndarray:
    """Central finite-difference Jacobian of one integrator step, ``2d x 2d``."""
    z0 = z.as_vector()
    n = z0.shape[0]
    jac = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = fd_step
        fwd = step(sys, Phase.from_vector(z0 + e), tau, fp_tol, fp_max_iter).as_vector()
        bwd = step(sys, Phase.from_vector(z0 - e), tau, fp_tol, fp_max_iter).as_vector()
        jac[:, j] = (fwd - bwd) / (2.0 * fd_step)
    return jac


def symplectic_deviation(jac) -> float:
    """Infinity norm (max absolute row sum) of ``S^T J^{-1} S - J^{-1}``."""
    j_inv = canonical_j_inverse(jac.shape[0] // 2)
    return float(np.linalg.norm(jac.T @ j_inv @ jac - j_inv, ord=np.inf))


def check_symplectic(sys, z, tau, fd_step=1e-5, fp_tol=1e-12) -> float:
    """``||S^T J^{-1} S - J^{-1}||_inf`` for the FD Jacobian ``S`` of one step at ``z``."""
    return symplectic_deviation(step_jacobian(sys, z, tau, fd_step, fp_tol))


def check_volume(sys, z, tau, fd_step=1e-5, fp_tol=1e-12) -> float:
    """``|det S - 1|`` for the FD step Jacobian ``S``."""
    return float(abs(np.linalg.det(step_jacobian(sys, z, tau, fd_step, fp_tol)) - 1.0))


def check_reversibility(sys, z, tau, n_steps=10, fp_tol=1e-12, fp_max_iter=100) -> float:
    """Max-norm distance from ``z`` to ``flip(Psi^L(flip(Psi^L(z))))``.

    Raises:
        DivergedError: if either leg diverges.
    """
    config = IntegratorConfig(tau=tau, n_steps=n_steps, fp_tol=fp_tol, fp_max_iter=fp_max_iter)
    forward = integrate(sys, z, config)
    if forward.diverged:
        raise DivergedError(f"forward leg failed with status {forward.status}")
    back = integrate(sys, forward.end.flip(), config)
    if back.diverged:
        raise DivergedError(f"backward leg failed with status {back.status}")
    w = back.end.flip()
    return float(np.max(np.abs(w.as_vector() - z.as_vector())))


def check_symmetry(sys, z, tau, fp_tol=1e-12, fp_max_iter=100) -> float:
    """Max-norm distance from ``z`` to ``Psi_{-tau}(Psi_tau(z))``."""
    w = step(sys, step(sys, z, tau, fp_tol, fp_max_iter), -tau, fp_tol, fp_max_iter)
    return float(np.max(np.abs(w.as_vector() - z.as_vector())))


def max_energy_error(sys, z, tau, total_time, fp_tol=1e-12) -> float:
    """``max_k |H(z_k) - H(z_0)|`` over a trajectory of duration ``total_time``."""
    n_steps = int(round(total_time / tau))
    traj = integrate(sys, z, IntegratorConfig(tau=tau, n_steps=n_steps, fp_tol=fp_tol))
    if traj.diverged:
        raise DivergedError(f"trajectory diverged at tau={tau}")
    return float(np.max(np.abs(traj.energies - traj.energies[0])))


def check_order(sys, z, tau, total_time=2.0) -> float:
    """Ratio of max energy errors at ``tau`` and ``tau / 2`` over fixed total time.

    A second-order integrator gives a ratio close to 4.
    """
    return max_energy_error(sys, z, tau, total_time) / max_energy_error(sys, z, tau / 2, total_time)


SYMPLECTIC_TOL = 1e-5
REVERSIBILITY_TOL = 1e-8
VOLUME_TOL = 1e-6
ORDER_RANGE = (3.5, 4.5)


def integrator_name(sys) -> str:
    return "leapfrog" if sys.is_euclidean else "generalized_leapfrog"


def structure_report(sys, phases, taus, n_steps=10, total_time=2.0, fp_tol=1e-12, system_name=None):
    """Run the structural checks over ``phases`` for each step size.

    Returns rows (dicts with ``system, integrator, property, tau, deviation,
    lower, upper, passed``): the worst symplecticity, reversibility and volume error over the
    phases, plus the energy-error order ratio from the first phase. A check that
    cannot be evaluated because a step failed reports ``nan`` and fails.
    """
    name = integrator_name(sys)
    system_name = sys.target.name if system_name is None else system_name
    rows = []

    def add(tau, prop, value, lower, upper):
        ok = bool(np.isfinite(value) and lower <= value <= upper)
        rows.append(
            dict(
                system=system_name,
                integrator=name,
                property=prop,
                tau=float(tau),
                deviation=float(value),
                lower=lower,
                upper=upper,
                passed=ok,
            )
        )

    for tau in taus:
        sym = rev = vol = 0.0
        for z in phases:
            try:
                jac = step_jacobian(sys, z, tau, fp_tol=fp_tol)
                sym = max(sym, symplectic_deviation(jac))
                vol = max(vol, abs(float(np.linalg.det(jac)) - 1.0))
                rev = max(rev, check_reversibility(sys, z, tau, n_steps, fp_tol))
            except (DivergedError, MetricDegenerateError, UnsupportedPointError):
                sym = rev = vol = float("nan")
                break
        add(tau, "symplecticity", sym, 0.0, SYMPLECTIC_TOL)
        add(tau, "reversibility", rev, 0.0, REVERSIBILITY_TOL)
        add(tau, "volume", vol, 0.0, VOLUME_TOL)
    for tau in taus:
        try:
            ratio = check_order(sys, phases[0], tau, total_time)
        except (DivergedError, MetricDegenerateError, UnsupportedPointError, ZeroDivisionError):
            ratio = float("nan")
        add(tau, "order", ratio, *ORDER_RANGE)
    return rows


REPORT_COLUMNS = ("property", "system", "integrator", "tau", "deviation", "lower", "upper", "passed")
