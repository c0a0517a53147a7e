"""Chain summaries, effective sample size and energy-error diagnostics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .shadow import DEFAULT_COEFFICIENTS, bracket_KKU, bracket_UUK
from .hamiltonians import Phase


@dataclass
class ChainSummary:
    """Moments and quality measures for one chain.

    ``covariance`` is normalized by the total weight (not ``n - 1``), so a chain
    concatenated with itself summarizes identically.
    """

    n: int
    mean: np.ndarray
    covariance: np.ndarray
    ess: np.ndarray
    acceptance_rate: float
    divergence_count: int
    ess_degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    weighted: bool = False
    var_H_minus_Hshadow: Optional[float] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, np.ndarray):
                out[key] = value.tolist()
        return out


def _normalized_weights(weights, n):
    if weights is None:
        return None
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights must have length {n}")
    if not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and finite")
    w = w / np.max(w)
    return None if np.all(w == 1.0) else w


def weighted_moments(samples, weights=None):
    """Mean and weight-normalized covariance using exactly rounded sums.

    Uniform weights give bit-for-bit the unweighted result.
    """
    x = np.asarray(samples, dtype=float)
    n, d = x.shape
    w = _normalized_weights(weights, n)
    if w is None:
        total = float(n)
        mean = np.array([math.fsum(x[:, j]) / total for j in range(d)])
        r = x - mean
        cov = np.empty((d, d))
        for i in range(d):
            for j in range(i, d):
                cov[i, j] = cov[j, i] = math.fsum(r[:, i] * r[:, j]) / total
        return mean, cov
    total = math.fsum(w)
    mean = np.array([math.fsum(w * x[:, j]) / total for j in range(d)])
    r = x - mean
    cov = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            cov[i, j] = cov[j, i] = math.fsum(w * r[:, i] * r[:, j]) / total
    return mean, cov


def autocorrelation(series) -> np.ndarray:
    """Normalized autocorrelation at all lags via FFT; ``None``-free for non-constant input."""
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    r = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(r, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / acov[0]


def _ess_1d(series):
    """ESS of one coordinate and whether it was degenerate (zero variance)."""
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    if n < 2 or np.all(x == x[0]):
        return 1.0, True
    rho = autocorrelation(x)
    # initial positive sequence: sum pairs until the first non-positive pair sum
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    tau = max(tau, 1.0 / n)
    return float(min(n, n / tau)), False


def ess(samples, weights=None, return_flags: bool = False):
    """Per-coordinate effective sample size.

    Uses the initial-positive-sequence truncation of the autocorrelation sum.
    For weighted chains the result is multiplied by the Kish efficiency
    ``(sum w)^2 / (n sum w^2)``. Zero-variance coordinates report 1 and are
    flagged when ``return_flags`` is set.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n == 0:
        raise ValueError("empty chain")
    values = np.empty(d)
    flags = np.zeros(d, dtype=bool)
    for j in range(d):
        values[j], flags[j] = _ess_1d(x[:, j])
    w = _normalized_weights(weights, n)
    if w is not None:
        kish = math.fsum(w) ** 2 / (n * math.fsum(w * w))
        values = np.where(flags, values, np.clip(values * kish, np.finfo(float).tiny, n))
    return (values, flags) if return_flags else values


def shadow_gap(sys, xs, ps, tau, coefficients=DEFAULT_COEFFICIENTS) -> np.ndarray:
    """``H - H4`` at each recorded phase."""
    out = np.empty(len(xs))
    for k, (x, p) in enumerate(zip(xs, ps)):
        z = Phase(x, p)
        corr = coefficients.c_UUK * bracket_UUK(sys, z) + coefficients.c_KKU * bracket_KKU(sys, z)
        out[k] = -tau * tau * corr
    return out


def summarize(chain, shadow_context=None) -> ChainSummary:
    """Summarize a chain.

    Args:
        chain: A :class:`~geomc.samplers.Chain`.
        shadow_context: Optional ``(sys, tau)``; when given and the chain holds
            momenta, ``Var(H - H4)`` over the recorded phases is included.

    Raises:
        ValueError: for an empty chain.
    """
    n = len(chain.samples)
    if n == 0:
        raise ValueError("cannot summarize an empty chain")
    weights = np.asarray(chain.weights, dtype=float)
    weighted = _normalized_weights(weights, n) is not None
    mean, cov = weighted_moments(chain.samples, weights)
    ess_values, flags = ess(chain.samples, weights, return_flags=True)
    var_gap = None
    if shadow_context is not None and chain.momenta is not None:
        sys, tau = shadow_context
        var_gap = float(np.var(shadow_gap(sys, chain.samples, chain.momenta, tau)))
    return ChainSummary(
        n=n,
        mean=mean,
        covariance=cov,
        ess=ess_values,
        acceptance_rate=float(np.mean(chain.accepted)),
        divergence_count=int(np.count_nonzero(chain.diverged)),
        ess_degenerate=flags,
        weighted=weighted,
        var_H_minus_Hshadow=var_gap,
    )


@dataclass
class EnergyReport:
    """Energy-error statistics pooled over all recorded phases of all trajectories.

    ``dH`` and ``dHshadow`` are drifts relative to each trajectory's start;
    ``gap`` is ``H - H4`` at every phase.
    """

    tau: float
    n_phases: int
    mean_dH: float
    var_dH: float
    mean_dHshadow: float
    var_dHshadow: float
    mean_gap: float
    var_gap: float

    def to_dict(self) -> dict:
        return asdict(self)


def energy_report(trajectories, sys, tau: float, coefficients=DEFAULT_COEFFICIENTS) -> EnergyReport:
    """Mean and variance of ``Delta H``, ``Delta H4`` and ``H - H4`` along trajectories."""
    dH, dS, gap = [], [], []
    for traj in trajectories:
        g = shadow_gap(sys, traj.xs, traj.ps, tau, coefficients)
        e = np.asarray(traj.energies, dtype=float)
        s = e - g
        dH.append(e - e[0])
        dS.append(s - s[0])
        gap.append(g)
    if not dH:
        raise ValueError("no trajectories")
    dH, dS, gap = (np.concatenate(v) for v in (dH, dS, gap))
    return EnergyReport(
        tau=float(tau),
        n_phases=int(dH.shape[0]),
        mean_dH=float(np.mean(dH)),
        var_dH=float(np.var(dH)),
        mean_dHshadow=float(np.mean(dS)),
        var_dHshadow=float(np.var(dS)),
        mean_gap=float(np.mean(gap)),
        var_gap=float(np.var(gap)),
    )
