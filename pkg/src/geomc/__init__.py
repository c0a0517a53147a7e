"""Geometric MCMC engine.

Targets, Euclidean and Riemannian Hamiltonian systems, symplectic integrators
with structural checks, fourth-order shadow Hamiltonians, and the RWM / MALA /
HMC / GHMC / RMHMC / SHMC samplers. The numerical hot loops run in a compiled
extension when it is available (see :data:`BACKEND`).
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (
    ConfigError,
    DivergedError,
    GeomcError,
    MetricDegenerateError,
    ShadowRejectionError,
    UnsupportedPointError,
)
from .targets import (
    MetricField,
    TargetModel,
    grad_potential,
    hessian_potential,
    make_banana,
    make_desk_logreg,
    make_gaussian,
    make_logreg,
    make_target,
    potential,
)
from .hamiltonians import HamiltonianSystem, Phase
from .integrators import (
    IntegratorConfig,
    Trajectory,
    check_order,
    check_reversibility,
    check_symplectic,
    check_volume,
    generalized_leapfrog_step,
    integrate,
    leapfrog_step,
    momentum_flip,
)
from .shadow import ShadowCoefficients, bracket_KKU, bracket_UUK, shadow4, shadow_conservation_scan
from .samplers import (
    Chain,
    SamplerState,
    ghmc_step,
    hmc_step,
    make_rng,
    mala_step,
    mh_accept,
    rmhmc_step,
    run_sampler,
    rwm_step,
    shmc_momentum_draw,
    shmc_reweight,
    shmc_step,
)
from .diagnostics import ChainSummary, energy_report, ess, summarize
from .config import SamplerRunConfig, parse_config
from .io import read_chain_csv, write_chain_csv
