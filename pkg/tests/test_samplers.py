import math

import numpy as np
import pytest
from scipy import integrate as quad_integrate
from scipy import stats

from geomc import (
    DivergedError,
    HamiltonianSystem,
    IntegratorConfig,
    Phase,
    ShadowRejectionError,
    make_desk_logreg,
    make_gaussian,
)
from geomc.config import parse_config
from geomc.samplers import (
    Chain,
    SamplerState,
    ghmc_step,
    hmc_step,
    make_rng,
    mala_proposal,
    mala_step,
    mh_accept,
    rmhmc_step,
    rotation,
    run_sampler,
    rwm_step,
    sample,
    shmc_momentum_draw,
    shmc_reweight,
    shmc_step,
)
from geomc.integrators import integrate


def test_mh_accept_extremes(rng):
    assert all(mh_accept(0.0, rng) for _ in range(1000))
    assert all(mh_accept(5.0, rng) for _ in range(1000))
    assert not any(mh_accept(-math.inf, rng) for _ in range(1000))
    assert not any(mh_accept(math.nan, rng) for _ in range(1000))


def test_mh_accept_rate(rng):
    n = 100_000
    rate = np.mean([mh_accept(math.log(0.5), rng) for _ in range(n)])
    assert abs(rate - 0.5) < 0.01


def test_mh_accept_always_draws_one_uniform():
    a, b = make_rng(1), make_rng(1)
    mh_accept(-math.inf, a)
    mh_accept(10.0, a)
    b.random(2)
    assert a.random() == b.random()


def test_rwm_zero_step_is_constant(rng):
    t = make_gaussian(np.zeros(3), np.eye(3))
    chain = sample(lambda s, r: rwm_step(s, t, 0.0, r), SamplerState(np.ones(3)), 50, rng)
    assert np.all(chain.samples == 1.0) and chain.accepted.all()


def test_rwm_unit_gaussian_variance():
    t = make_gaussian([0.0], [[1.0]])
    chain = sample(lambda s, r: rwm_step(s, t, 2.4, r), SamplerState(np.zeros(1)), 100_000, make_rng(7), warmup=1000)
    assert abs(chain.samples.var() - 1.0) < 0.05
    assert 0.3 < chain.acceptance_rate < 0.6


def test_mala_matches_textbook_proposal(rng):
    t = make_desk_logreg()
    x = np.array([0.2, -0.4])
    xi = rng.standard_normal(2)
    eps = 0.3
    expected = x + 0.5 * eps * t.grad(x) + math.sqrt(eps) * xi
    np.testing.assert_allclose(mala_proposal(t, x, eps, xi), expected, rtol=1e-14, atol=1e-15)


def test_mala_gaussian_variance():
    t = make_gaussian(np.zeros(2), np.diag([1.0, 0.5]))
    chain = sample(lambda s, r: mala_step(s, t, 0.5, r), SamplerState(np.zeros(2)), 50_000, make_rng(3), warmup=500)
    np.testing.assert_allclose(chain.samples.var(axis=0), [1.0, 0.5], rtol=0.06)
    assert np.all(np.abs(chain.samples.mean(axis=0)) < 0.05)


def test_mala_vanishing_step(rng):
    t = make_gaussian(np.zeros(2), np.eye(2))
    x = np.array([0.3, 0.4])
    s, info = mala_step(SamplerState(x), t, 0.0, rng)
    assert info.accepted and np.array_equal(s.x, x)
    # acceptance tends to one as the step shrinks
    chain = sample(lambda s, r: mala_step(s, t, 1e-6, r), SamplerState(x), 500, rng)
    assert chain.acceptance_rate > 0.99


def test_mala_equals_one_step_hmc():
    t = make_gaussian([0.5, -1.0], [[2.0, 0.6], [0.6, 0.5]])
    sys = HamiltonianSystem.euclidean(t)
    eps = 0.4
    cfg = IntegratorConfig(math.sqrt(eps), 1)
    a = sample(lambda s, r: mala_step(s, t, eps, r), SamplerState(np.zeros(2)), 500, make_rng(11))
    b = sample(lambda s, r: hmc_step(s, sys, cfg, r), SamplerState(np.zeros(2)), 500, make_rng(11))
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.accepted, b.accepted)


def test_rotation_is_exact_at_quarter_turns():
    assert rotation(math.pi / 2) == (0.0, 1.0)
    assert rotation(0.0) == (1.0, 0.0)
    c, s = rotation(math.pi / 4)
    assert c == pytest.approx(s)


def test_ghmc_quarter_turn_is_hmc():
    sys = HamiltonianSystem.euclidean(make_gaussian(np.zeros(3), np.diag([1.0, 0.5, 2.0])))
    cfg = IntegratorConfig(0.3, 5)
    p0 = np.ones(3)
    a = sample(lambda s, r: ghmc_step(s, sys, cfg, math.pi / 2, r), SamplerState(np.zeros(3), p0), 300, make_rng(5))
    b = sample(lambda s, r: hmc_step(s, sys, cfg, r), SamplerState(np.zeros(3)), 300, make_rng(5))
    np.testing.assert_array_equal(a.samples, b.samples)


def test_ghmc_zero_angle_keeps_momentum(rng):
    sys = HamiltonianSystem.euclidean(make_gaussian(np.zeros(2), np.eye(2)))
    cfg = IntegratorConfig(0.2, 1)
    x, p = np.array([0.3, -0.1]), np.array([0.5, 0.7])
    s, info = ghmc_step(SamplerState(x, p), sys, cfg, 0.0, rng)
    traj = integrate(sys, Phase(x, p), cfg)
    if info.accepted:
        # final flip undoes the proposal flip: momentum continues along the orbit
        np.testing.assert_array_equal(s.p, traj.ps[-1])
        np.testing.assert_array_equal(s.x, traj.xs[-1])
    else:
        np.testing.assert_array_equal(s.p, -p)


def test_ghmc_rejection_negates_momentum():
    sys = HamiltonianSystem.euclidean(make_gaussian([0.0], [[1e-4]]))
    p = np.array([1.0])
    s, info = ghmc_step(SamplerState(np.array([1.0]), p), sys, IntegratorConfig(0.5, 50), 0.0, make_rng(0))
    assert not info.accepted and info.diverged
    np.testing.assert_array_equal(s.p, -p)


def test_ghmc_rotation_preserves_momentum_distribution(rng):
    # p ~ N(0, M), xi ~ N(0, M) independent -> rotated p ~ N(0, M)
    sys = HamiltonianSystem.euclidean(make_gaussian(np.zeros(2), np.eye(2)), mass=np.array([[2.0, 0.5], [0.5, 1.0]]))
    c, s = rotation(0.7)
    ps = np.array([c * sys.sample_momentum(np.zeros(2), rng) + s * sys.sample_momentum(np.zeros(2), rng) for _ in range(40_000)])
    np.testing.assert_allclose(np.cov(ps.T), [[2.0, 0.5], [0.5, 1.0]], atol=0.05)


def test_flip_after_flow_is_involution(rng):
    # (flip o Psi) applied twice returns to the start
    sys = HamiltonianSystem.euclidean(make_gaussian([0.5, -1.0], [[2.0, 0.6], [0.6, 0.5]]))
    cfg = IntegratorConfig(0.15, 12)
    z = sys.random_phase(rng)
    t1 = integrate(sys, z, cfg)
    t2 = integrate(sys, Phase(t1.xs[-1], -t1.ps[-1]), cfg)
    np.testing.assert_allclose(t2.xs[-1], z.x, atol=1e-12)
    np.testing.assert_allclose(-t2.ps[-1], z.p, atol=1e-12)


def test_rmhmc_requires_riemannian():
    sys = HamiltonianSystem.euclidean(make_gaussian(np.zeros(2), np.eye(2)))
    with pytest.raises(ValueError):
        rmhmc_step(SamplerState(np.zeros(2)), sys, IntegratorConfig(0.1, 2), make_rng(0))


def _per_try_acceptance(x, tau, a):
    """P(accept one try) for the unit oscillator: E_p[min(1, exp(-max(0, excess)))]."""
    def integrand(p):
        excess = tau**2 * (-(x**2) / 24 + p**2 / 12) - a
        return stats.norm.pdf(p) * math.exp(-max(0.0, excess))
    return quad_integrate.quad(integrand, -12, 12, points=[0.0], limit=200)[0]


def test_shmc_per_try_acceptance_matches_closed_form(oscillator):
    # large tau makes the excess positive for moderate momenta
    x, tau, a = 1.0, 2.0, 0.0
    rng = make_rng(99)
    n = 40_000
    tries = np.array([shmc_momentum_draw(oscillator, [x], tau, a, rng)[1] for _ in range(n)])
    p_acc = _per_try_acceptance(x, tau, a)
    assert p_acc < 0.9
    assert n / tries.sum() == pytest.approx(p_acc, abs=0.01)


def test_shmc_momentum_draw_density(oscillator):
    x, tau, a = 0.0, 2.0, 0.0
    rng = make_rng(4)
    ps = np.array([shmc_momentum_draw(oscillator, [x], tau, a, rng)[0][0] for _ in range(40_000)])
    # exp(-p^2/2 - p^2/3) is N(0, 3/5)
    assert ps.var() == pytest.approx(0.6, rel=0.03)


def test_shmc_rejection_cap(oscillator):
    with pytest.raises(ShadowRejectionError, match="a too negative"):
        shmc_momentum_draw(oscillator, [1.0], 0.5, -1e4, make_rng(0), max_tries=50)


def test_shmc_large_offset_is_hmc():
    sys = HamiltonianSystem.euclidean(make_gaussian(np.zeros(2), np.diag([1.0, 0.3])))
    cfg = IntegratorConfig(0.3, 8)
    a = sample(lambda s, r: shmc_step(s, sys, cfg, 1e6, r), SamplerState(np.zeros(2)), 300, make_rng(8))
    b = sample(lambda s, r: hmc_step(s, sys, cfg, r), SamplerState(np.zeros(2)), 300, make_rng(8))
    np.testing.assert_array_equal(a.samples, b.samples)
    assert np.all(a.weights == 1.0)


def test_shmc_reweighted_moments():
    cov = np.diag([1.0, 0.3])
    sys = HamiltonianSystem.euclidean(make_gaussian(np.zeros(2), cov))
    cfg = IntegratorConfig(0.5, 4)
    chain = sample(lambda s, r: shmc_step(s, sys, cfg, 0.0, r), SamplerState(np.zeros(2)), 40_000, make_rng(21), warmup=500)
    assert np.any(chain.weights > 1.0)
    w = shmc_reweight(chain)
    np.testing.assert_allclose(w.variance(), np.diag(cov), rtol=0.06)
    assert np.all(np.abs(w.mean()) < 4 * w.stderr() + 1e-3)


def _chain_with_weights(w):
    n = len(w)
    return Chain(np.arange(n, dtype=float).reshape(-1, 1), np.ones(n, bool), np.zeros(n), np.asarray(w, float), np.zeros(n, bool))


def test_reweight_invariances():
    w = np.array([1.0, 2.0, 3.0, 4.0])
    base = shmc_reweight(_chain_with_weights(w))
    assert math.fsum(base.weights) == pytest.approx(1.0, abs=1e-15)
    scaled = shmc_reweight(_chain_with_weights(w * 2.0**10))
    np.testing.assert_array_equal(base.weights, scaled.weights)
    uniform = shmc_reweight(_chain_with_weights(np.full(4, 7.3)))
    np.testing.assert_array_equal(uniform.weights, np.full(4, 0.25))
    assert uniform.mean()[0] == 1.5


def test_chain_validation():
    with pytest.raises(ValueError):
        _chain_with_weights([1.0, 0.0])
    with pytest.raises(ValueError):
        Chain(np.zeros((3, 1)), np.ones(2, bool), np.zeros(3), np.ones(3), np.zeros(3, bool))


def test_divergence_cap():
    sys = HamiltonianSystem.euclidean(make_gaussian([0.0], [[1e-4]]))
    cfg = IntegratorConfig(0.5, 50)
    step = lambda s, r: hmc_step(s, sys, cfg, r)
    chain = sample(step, SamplerState(np.zeros(1)), 5, make_rng(0))
    assert chain.divergences == 5 and not chain.accepted.any()
    with pytest.raises(DivergedError):
        sample(step, SamplerState(np.zeros(1)), 5, make_rng(0), max_divergences=2)


def _cfg(text):
    return parse_config(text)


def test_run_sampler_empty_and_deterministic():
    cfg = _cfg("target = gaussian\nsampler = hmc\nn_samples = 0\nseed = 1\ndim = 2\n")
    chain = run_sampler(cfg)
    assert len(chain) == 0 and chain.dim == 2
    cfg = _cfg("target = banana\nsampler = hmc\nn_samples = 200\nseed = 3\nwarmup = 10\ntau = 0.05\n")
    a, b = run_sampler(cfg), run_sampler(cfg)
    np.testing.assert_array_equal(a.samples, b.samples)
    c = run_sampler(cfg, chain_index=1)
    assert not np.array_equal(a.samples, c.samples)
    cfg.seed = 4
    assert not np.array_equal(a.samples, run_sampler(cfg).samples)


@pytest.mark.parametrize("kind", ["rwm", "mala", "hmc", "ghmc", "rmhmc", "shmc"])
def test_stationarity_2d_gaussian(kind):
    # every sampler leaves N(0, diag(1, 0.25)) invariant; tau * L = 1.2 stays
    # clear of the half period pi/2 of the narrow coordinate, where HMC stalls
    text = (
        f"target = gaussian\nsampler = {kind}\nn_samples = 30000\nseed = 17\ndim = 2\n"
        "cov = diag:1,0.25\nwarmup = 200\ntau = 0.3\nL = 4\nepsilon = 0.2\nphi = 0.5pi\na = 0\n"
    )
    if kind == "ghmc":
        text = text.replace("L = 4", "L = 1").replace("phi = 0.5pi", "phi = 0.25pi")
    chain = run_sampler(_cfg(text))
    w = shmc_reweight(chain)
    np.testing.assert_allclose(w.variance(), [1.0, 0.25], rtol=0.1)
    assert np.all(np.abs(w.mean()) < 5 * w.stderr())
