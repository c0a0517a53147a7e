"""MCMC transition kernels: RWM, MALA, HMC, GHMC, RMHMC and SHMC.

Every ``*_step`` function maps ``(state, ..., rng)`` to ``(new_state, StepInfo)``
and never mutates its input. Each step draws its random numbers in a fixed
order (momentum or noise first, then exactly one uniform for the
Metropolis-Hastings test) so that kernels which coincide mathematically also
consume identical random streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DivergedError, ShadowRejectionError
from .hamiltonians import HamiltonianSystem, Phase
from .integrators import IntegratorConfig, integrate
from .shadow import DEFAULT_COEFFICIENTS, ShadowCoefficients, bracket_KKU, bracket_UUK
from .targets import TargetModel, grad_potential

SHMC_MAX_TRIES = 10_000
SAMPLER_KINDS = ("rwm", "mala", "hmc", "ghmc", "rmhmc", "shmc")


@dataclass
class Chain:
    """Post-warmup output of one sampler run.

    Attributes:
        samples: ``n x d`` positions.
        accepted: Per-step acceptance flags.
        energy_errors: Per-proposal ``Delta H`` (for RWM, the change in ``U``).
        weights: Importance weights; all ones except for SHMC.
        diverged: Per-step divergence flags.
        seed: Master seed of the run (``None`` when drawn from OS entropy).
        momenta: Optional ``n x d`` momenta of the recorded phases.
        tries: Optional per-step SHMC momentum-draw attempt counts.
    """

    samples: np.ndarray
    accepted: np.ndarray
    energy_errors: np.ndarray
    weights: np.ndarray
    diverged: np.ndarray
    seed: Optional[int] = None
    momenta: Optional[np.ndarray] = None
    tries: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.samples)
        for name in ("accepted", "energy_errors", "weights", "diverged"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"chain field '{name}' has length {len(getattr(self, name))}, expected {n}")
        if n and not np.all(self.weights > 0):
            raise ValueError("chain weights must be positive")

    def __len__(self):
        return len(self.samples)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def divergences(self) -> int:
        return int(np.count_nonzero(self.diverged))

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self) else 0.0

    @classmethod
    def empty(cls, dim: int, seed=None) -> "Chain":
        return cls(
            np.empty((0, dim)), np.empty(0, dtype=bool), np.empty(0), np.empty(0), np.empty(0, dtype=bool), seed
        )


@dataclass
class SamplerState:
    """Current position, GHMC persistent momentum and, for SHMC, ``H_M - H``."""

    x: np.ndarray
    p: Optional[np.ndarray] = None
    excess: float = 0.0

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.x)):
            raise ValueError("sampler state must be finite")
        if self.p is not None:
            self.p = np.array(self.p, dtype=float).reshape(-1)


@dataclass
class StepInfo:
    accepted: bool
    delta_H: float
    diverged: bool = False
    weight: float = 1.0
    tries: int = 0


def mh_accept(logratio: float, rng: np.random.Generator) -> bool:
    """Accept with probability ``min(1, exp(logratio))``.

    One uniform is always drawn, whatever the ratio, so streams stay aligned.
    NaN counts as ``-inf``.
    """
    u = rng.random()
    if math.isnan(logratio):
        return False
    return u < math.exp(min(0.0, logratio))


def _log_density(target, x) -> float:
    value = float(target.log_density_unnorm(x))
    return value if math.isfinite(value) else -math.inf


def rwm_step(state: SamplerState, target: TargetModel, step_sigma: float, rng):
    """Random-walk Metropolis with an isotropic Gaussian proposal."""
    x = state.x
    y = x + step_sigma * rng.standard_normal(x.shape[0])
    lp_x = _log_density(target, x)
    lp_y = _log_density(target, y)
    logratio = lp_y - lp_x if math.isfinite(lp_y) else -math.inf
    if mh_accept(logratio, rng):
        return SamplerState(y), StepInfo(True, -logratio)
    return SamplerState(x), StepInfo(False, -logratio)


def mala_proposal(target: TargetModel, x, epsilon: float, xi) -> np.ndarray:
    """Langevin proposal ``x - (eps/2) grad U(x) + sqrt(eps) xi``.

    Evaluated as a single unit-mass leapfrog step with momentum ``xi`` and step
    ``sqrt(eps)`` so it agrees with HMC (``L = 1``) to the last bit.
    """
    tau = math.sqrt(epsilon)
    p_half = xi - 0.5 * tau * grad_potential(target, x)
    return x + tau * p_half


def mala_step(state: SamplerState, target: TargetModel, epsilon: float, rng):
    """Metropolis-adjusted Langevin step with the asymmetric proposal correction."""
    x = state.x
    xi = rng.standard_normal(x.shape[0])
    if epsilon == 0:
        mh_accept(0.0, rng)
        return SamplerState(x), StepInfo(True, 0.0)
    y = mala_proposal(target, x, epsilon, xi)
    lp_y = _log_density(target, y)
    if not math.isfinite(lp_y):
        mh_accept(-math.inf, rng)
        return SamplerState(x), StepInfo(False, math.inf)
    tau = math.sqrt(epsilon)
    eps = tau * tau
    g_x = grad_potential(target, x)
    g_y = grad_potential(target, y)
    fwd = y - x + 0.5 * eps * g_x
    rev = x - y + 0.5 * eps * g_y
    logratio = lp_y - _log_density(target, x) + (fwd @ fwd - rev @ rev) / (2.0 * eps)
    if mh_accept(logratio, rng):
        return SamplerState(y), StepInfo(True, -logratio)
    return SamplerState(x), StepInfo(False, -logratio)


def _mdmc(sys, x, p, config, rng):
    """Integrate, flip and Metropolis-test; returns ``(x, p, accepted, dH, diverged)``."""
    traj = integrate(sys, Phase(x, p), config)
    dH = traj.delta_H
    if traj.diverged:
        mh_accept(-math.inf, rng)
        return x, p, False, dH, True
    if mh_accept(-dH, rng):
        return traj.xs[-1], -traj.ps[-1], True, dH, False
    return x, p, False, dH, False


def hmc_step(state: SamplerState, sys: HamiltonianSystem, config: IntegratorConfig, rng):
    """Hamiltonian Monte Carlo with full momentum refreshment.

    Works for both Euclidean and Riemannian systems; :func:`rmhmc_step` is the
    Riemannian-only entry point.
    """
    p = sys.sample_momentum(state.x, rng)
    x, p, accepted, dH, diverged = _mdmc(sys, state.x, p, config, rng)
    return SamplerState(x, p), StepInfo(accepted, dH, diverged)


def rmhmc_step(state: SamplerState, sys: HamiltonianSystem, config: IntegratorConfig, rng):
    """Riemannian-manifold HMC using the generalized leapfrog."""
    if sys.is_euclidean:
        raise ValueError("rmhmc_step needs a Riemannian system")
    return hmc_step(state, sys, config, rng)


def rotation(phi: float):
    """``(cos phi, sin phi)`` with round-off below 1e-15 snapped to zero."""
    c, s = math.cos(phi), math.sin(phi)
    return (0.0 if abs(c) < 1e-15 else c), (0.0 if abs(s) < 1e-15 else s)


def ghmc_step(state: SamplerState, sys: HamiltonianSystem, config: IntegratorConfig, phi: float, rng):
    """Generalized HMC: partial momentum refresh by rotation, MDMC, final flip.

    A rejected proposal leaves the momentum negated.
    """
    if state.p is None:
        raise ValueError("GHMC needs a persistent momentum in the state")
    xi = sys.sample_momentum(state.x, rng)
    c, s = rotation(phi)
    p = state.p * c + xi * s
    x, p, accepted, dH, diverged = _mdmc(sys, state.x, p, config, rng)
    return SamplerState(x, -p), StepInfo(accepted, dH, diverged)


def _shadow_excess(sys, x, p, tau, a, coefficients) -> float:
    """``H4 - a - H`` at ``(x, p)``."""
    z = Phase(x, p)
    corr = coefficients.c_UUK * bracket_UUK(sys, z) + coefficients.c_KKU * bracket_KKU(sys, z)
    return tau * tau * corr - a


def shmc_momentum_draw(
    sys: HamiltonianSystem,
    x,
    tau: float,
    a: float,
    rng,
    max_tries: int = SHMC_MAX_TRIES,
    coefficients: ShadowCoefficients = DEFAULT_COEFFICIENTS,
):
    """Rejection-sample ``p`` from ``exp(-H_M(x, .))`` using ``N(0, G)`` proposals.

    Each try is accepted with probability ``exp(-(H_M - H))``. When that
    probability is one no uniform is drawn.

    Returns:
        ``(p, tries, excess)`` where ``excess = H_M - H`` at the accepted momentum.

    Raises:
        ShadowRejectionError: after ``max_tries`` rejected tries.
    """
    x = np.asarray(x, dtype=float)
    for tries in range(1, max_tries + 1):
        p = sys.sample_momentum(x, rng)
        excess = _shadow_excess(sys, x, p, tau, a, coefficients)
        if excess <= 0.0:
            return p, tries, 0.0
        if rng.random() < math.exp(-excess):
            return p, tries, excess
    raise ShadowRejectionError(f"a too negative: no momentum accepted in {max_tries} tries (a={a})")


def shmc_step(
    state: SamplerState,
    sys: HamiltonianSystem,
    config: IntegratorConfig,
    a: float,
    rng,
    coefficients: ShadowCoefficients = DEFAULT_COEFFICIENTS,
    max_tries: int = SHMC_MAX_TRIES,
):
    """Shadow HMC targeting ``exp(-H_M)`` with ``H_M = max(H, H4 - a)``.

    The recorded weight is ``exp(H_M - H)`` at the state the step ends in.
    """
    if not sys.is_euclidean:
        raise ValueError("shmc_step needs a Euclidean system")
    x = state.x
    p, tries, m0 = shmc_momentum_draw(sys, x, config.tau, a, rng, max_tries, coefficients)
    traj = integrate(sys, Phase(x, p), config)
    dH = traj.delta_H
    if traj.diverged:
        mh_accept(-math.inf, rng)
        return SamplerState(x, p, m0), StepInfo(False, dH, True, math.exp(m0), tries)
    x1, p1 = traj.xs[-1], -traj.ps[-1]
    m1 = max(0.0, _shadow_excess(sys, x1, p1, config.tau, a, coefficients))
    if mh_accept(-(dH + m1 - m0), rng):
        return SamplerState(x1, p1, m1), StepInfo(True, dH, False, math.exp(m1), tries)
    return SamplerState(x, p, m0), StepInfo(False, dH, False, math.exp(m0), tries)


@dataclass
class WeightedSamples:
    """Self-normalized importance-weighted view of a chain."""

    samples: np.ndarray
    weights: np.ndarray

    def mean(self) -> np.ndarray:
        return self.weights @ self.samples

    def variance(self) -> np.ndarray:
        r = self.samples - self.mean()
        return self.weights @ (r * r)

    def stderr(self) -> np.ndarray:
        """Standard error of :meth:`mean` using the autocorrelation-aware weighted ESS."""
        from .diagnostics import ess

        return np.sqrt(self.variance() / ess(self.samples, self.weights))


def shmc_reweight(chain: Chain) -> WeightedSamples:
    """Normalize the chain's weights to sum to one.

    Weights are scaled by their maximum first, so a constant factor common to
    every weight cancels exactly.
    """
    w = np.asarray(chain.weights, dtype=float)
    if len(w) == 0:
        raise ValueError("empty chain")
    w = w / np.max(w)
    return WeightedSamples(np.asarray(chain.samples), w / math.fsum(w))


def make_rng(seed: Optional[int], chain: int = 0, stream: Optional[int] = None) -> np.random.Generator:
    """PCG64 generator for ``chain``, split from ``seed`` via ``SeedSequence`` spawn keys.

    ``stream`` selects an auxiliary sub-stream of the same chain; GHMC draws its
    initial momentum from ``stream=1`` so the main stream matches HMC.
    """
    key = (chain,) if stream is None else (chain, stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def sample(
    step_fn: Callable,
    state: SamplerState,
    n_samples: int,
    rng,
    warmup: int = 0,
    seed=None,
    record_momenta: bool = False,
    max_divergences: Optional[int] = None,
) -> Chain:
    """Run ``warmup + n_samples`` steps of ``step_fn(state, rng)``, keeping the last ``n_samples``.

    Raises:
        DivergedError: if more than ``max_divergences`` steps (warmup included) diverge.
    """
    if n_samples < 0 or warmup < 0:
        raise ValueError("n_samples and warmup must be non-negative")
    d = state.x.shape[0]
    n_div = 0

    def count(info):
        nonlocal n_div
        if info.diverged:
            n_div += 1
            if max_divergences is not None and n_div > max_divergences:
                raise DivergedError(f"divergence cap exceeded: {n_div} > {max_divergences}")

    for _ in range(warmup):
        state, info = step_fn(state, rng)
        count(info)
    if n_samples == 0:
        return Chain.empty(d, seed)
    xs = np.empty((n_samples, d))
    ps = np.empty((n_samples, d)) if record_momenta else None
    accepted = np.empty(n_samples, dtype=bool)
    dH = np.empty(n_samples)
    weights = np.empty(n_samples)
    diverged = np.empty(n_samples, dtype=bool)
    tries = np.empty(n_samples, dtype=np.int64)
    for i in range(n_samples):
        state, info = step_fn(state, rng)
        count(info)
        xs[i] = state.x
        if record_momenta:
            ps[i] = np.nan if state.p is None else state.p
        accepted[i] = info.accepted
        dH[i] = info.delta_H
        weights[i] = info.weight
        diverged[i] = info.diverged
        tries[i] = info.tries
    return Chain(xs, accepted, dH, weights, diverged, seed, ps, tries if tries.any() else None)


def build_step(kind: str, target: TargetModel, sys: Optional[HamiltonianSystem], params: dict) -> Callable:
    """Bind a sampler kind and its parameters into ``step_fn(state, rng)``.

    ``params`` may contain ``step_sigma``, ``epsilon``, ``config``, ``phi`` and ``a``.
    """
    if kind == "rwm":
        sigma = params.get("step_sigma")
        sigma = 2.4 / math.sqrt(target.dim) if sigma is None else sigma
        return lambda s, rng: rwm_step(s, target, sigma, rng)
    if kind == "mala":
        eps = params["epsilon"]
        return lambda s, rng: mala_step(s, target, eps, rng)
    config = params["config"]
    if kind == "hmc":
        return lambda s, rng: hmc_step(s, sys, config, rng)
    if kind == "rmhmc":
        return lambda s, rng: rmhmc_step(s, sys, config, rng)
    if kind == "ghmc":
        phi = params.get("phi", math.pi / 2)
        return lambda s, rng: ghmc_step(s, sys, config, phi, rng)
    if kind == "shmc":
        a = params.get("a", 1.0)
        return lambda s, rng: shmc_step(s, sys, config, a, rng)
    raise ValueError(f"unknown sampler kind '{kind}'")


def run_sampler(config, chain_index: int = 0, record_momenta: bool = False) -> Chain:
    """Run one chain described by a :class:`~geomc.config.SamplerRunConfig`.

    The chain starts at the target's reference point, discards ``warmup``
    steps and is a deterministic function of ``(config, seed, chain_index)``.
    """
    from .config import build_system, build_target, initial_position

    target = build_target(config)
    sys = build_system(config, target)
    params = {
        "step_sigma": config.step_sigma,
        "epsilon": config.epsilon if config.epsilon is not None else config.tau**2,
        "phi": config.phi,
        "a": config.a,
        "config": IntegratorConfig(
            tau=config.tau, n_steps=config.L, fp_tol=config.fp_tol, fp_max_iter=config.fp_max_iter
        ),
    }
    step_fn = build_step(config.sampler, target, sys, params)
    rng = make_rng(config.seed, chain_index)
    x0 = initial_position(config, target)
    p0 = None
    if config.sampler == "ghmc":
        aux = make_rng(config.seed, chain_index, stream=1)
        p0 = sys.sample_momentum(x0, aux)
    return sample(
        step_fn,
        SamplerState(x0, p0),
        config.n_samples,
        rng,
        warmup=config.warmup,
        seed=config.seed,
        record_momenta=record_momenta,
        max_divergences=config.max_divergences,
    )
