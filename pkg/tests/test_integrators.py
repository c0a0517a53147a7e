import numpy as np
import pytest

from conftest import GAUSS5_COV, builtin_targets, random_positions
from oracles import leapfrog_matrix
from geomc import (
    DivergedError,
    HamiltonianSystem,
    IntegratorConfig,
    MetricField,
    Phase,
    check_order,
    check_reversibility,
    check_symplectic,
    check_volume,
    generalized_leapfrog_step,
    integrate,
    leapfrog_step,
    make_banana,
    make_desk_logreg,
    make_gaussian,
    momentum_flip,
)
from geomc.integrators import check_symmetry, step, step_jacobian, structure_report
from geomc.targets import TargetModel


def test_leapfrog_oscillator_example(oscillator):
    z = leapfrog_step(oscillator, Phase([1.0], [0.0]), 0.2)
    assert z.x[0] == pytest.approx(0.98, abs=1e-15)
    assert z.p[0] == pytest.approx(-0.198, abs=1e-15)
    assert oscillator.energy(z) == pytest.approx(0.499802, abs=1e-15)


def test_leapfrog_free_particle_and_zero_step():
    free = TargetModel(2, lambda x: 0.0, lambda x: np.zeros(2), lambda x: np.zeros((2, 2)))
    sys = HamiltonianSystem.euclidean(free)
    z = Phase([1.0, 2.0], [0.5, -1.0])
    out = leapfrog_step(sys, z, 0.3)
    np.testing.assert_allclose(out.x, z.x + 0.3 * z.p, rtol=1e-15)
    np.testing.assert_array_equal(out.p, z.p)
    same = leapfrog_step(sys, z, 0.0)
    np.testing.assert_array_equal(same.x, z.x)
    np.testing.assert_array_equal(same.p, z.p)


def test_integrate_matches_reference_step(oscillator, rng):
    # backend trajectory against the plain single-step reference
    t = make_gaussian(np.zeros(5), GAUSS5_COV)
    for sys in (HamiltonianSystem.euclidean(t), HamiltonianSystem.euclidean(t, mass=np.diag([1, 2, 3, 4, 5.0]))):
        z = sys.random_phase(rng)
        traj = integrate(sys, z, IntegratorConfig(tau=0.1, n_steps=7))
        w = z
        for k in range(7):
            w = leapfrog_step(sys, w, 0.1)
            np.testing.assert_allclose(traj.xs[k + 1], w.x, rtol=1e-13, atol=1e-14)
            np.testing.assert_allclose(traj.ps[k + 1], w.p, rtol=1e-13, atol=1e-14)
            assert traj.energies[k + 1] == pytest.approx(sys.energy(w), rel=1e-13)
        assert len(traj) == 8 and not traj.diverged


def test_generalized_step_matches_backend_trajectory(rng):
    sys = HamiltonianSystem.riemannian(make_desk_logreg())
    z = sys.random_phase(rng)
    ref = z
    for _ in range(5):
        ref = generalized_leapfrog_step(sys, ref, 0.1, fp_tol=1e-13)
    traj = integrate(sys, z, IntegratorConfig(tau=0.1, n_steps=5, fp_tol=1e-13))
    np.testing.assert_allclose(traj.end.x, ref.x, atol=1e-11)
    np.testing.assert_allclose(traj.end.p, ref.p, atol=1e-11)


def test_generalized_reduces_to_leapfrog_for_constant_metric(rng):
    G = np.array([[2.0, 0.4], [0.4, 1.0]])
    t = make_gaussian(np.zeros(2), np.array([[1.0, 0.3], [0.3, 0.5]]))
    e = HamiltonianSystem.euclidean(t, mass=G)
    r = HamiltonianSystem.riemannian(t, MetricField.constant(G))
    for _ in range(10):
        z = e.random_phase(rng)
        a, b = leapfrog_step(e, z, 0.2), generalized_leapfrog_step(r, z, 0.2)
        np.testing.assert_allclose(a.x, b.x, rtol=1e-14, atol=1e-15)
        np.testing.assert_allclose(a.p, b.p, rtol=1e-14, atol=1e-15)


def test_generalized_zero_step_is_identity():
    sys = HamiltonianSystem.riemannian(make_desk_logreg())
    z = Phase([0.3, 0.1], [1.0, -2.0])
    out = generalized_leapfrog_step(sys, z, 0.0)
    np.testing.assert_array_equal(out.as_vector(), z.as_vector())


def test_generalized_nonconvergence_is_diverged():
    sys = HamiltonianSystem.riemannian(make_desk_logreg())
    z = Phase([0.3, 0.1], [1.0, -2.0])
    with pytest.raises(DivergedError):
        generalized_leapfrog_step(sys, z, 0.1, fp_tol=1e-10, fp_max_iter=1)
    traj = integrate(sys, z, IntegratorConfig(tau=0.1, n_steps=5, fp_max_iter=1))
    assert traj.diverged and traj.status == 2 and len(traj) == 1


def test_default_banana_generalized_leapfrog_step_size_limit(rng):
    # Fixed-point iteration is contractive only for small steps on the default banana.
    sys = HamiltonianSystem.riemannian(make_banana(0.1, 100.0))
    x = np.array([0.5, 9.5])
    z = Phase(x, sys.sample_momentum(x, rng))
    assert check_reversibility(sys, z, 0.01, 10) < 1e-8
    failed = 0
    for x in random_positions(sys.target, rng, 20):
        z = Phase(x, sys.sample_momentum(x, rng))
        try:
            step(sys, z, 0.1)
        except DivergedError:
            failed += 1
    assert failed > 0


def test_integrate_oscillator_bounded_energy(oscillator):
    traj = integrate(oscillator, Phase([1.0], [0.0]), IntegratorConfig(tau=0.2, n_steps=50))
    assert np.max(np.abs(traj.energies - 0.5)) < 0.01
    assert abs(traj.xs[-1, 0] - 1.0) > 0.5  # travelled around the orbit


def test_divergence_truncates_trajectory():
    t = make_gaussian([0.0], [[1e-4]])  # stiff: leapfrog unstable at tau=0.5
    sys = HamiltonianSystem.euclidean(t)
    traj = integrate(sys, Phase([1.0], [0.0]), IntegratorConfig(tau=0.5, n_steps=100))
    assert traj.diverged and len(traj) < 101
    assert abs(traj.energies[-1] - traj.energies[0]) > 1000 or not np.isfinite(traj.energies[-1])
    assert np.all(np.abs(traj.energies[:-1] - traj.energies[0]) <= 1000)


def test_integrate_one_step_equals_step(oscillator):
    z = Phase([0.3], [-0.4])
    traj = integrate(oscillator, z, IntegratorConfig(tau=0.2, n_steps=1))
    np.testing.assert_array_equal(traj.end.as_vector(), step(oscillator, z, 0.2).as_vector())


def test_momentum_flip():
    z = Phase([1.0, 2.0], [0.0, 3.0])
    np.testing.assert_array_equal(momentum_flip(momentum_flip(z)).p, z.p)
    np.testing.assert_array_equal(momentum_flip(Phase([1.0], [0.0])).p, [0.0])


def test_oscillator_jacobian_is_exact_linear_map(oscillator):
    J = step_jacobian(oscillator, Phase([0.7], [0.2]), 0.2)
    np.testing.assert_allclose(J, leapfrog_matrix(0.2), atol=1e-10)
    assert np.linalg.det(leapfrog_matrix(0.2)) == pytest.approx(1.0, abs=1e-15)
    assert check_symplectic(oscillator, Phase([1.0], [0.0]), 0.2) < 1e-6
    assert check_volume(oscillator, Phase([1.0], [0.0]), 0.2) < 1e-9


def test_zero_step_checks(oscillator):
    z = Phase([1.0], [0.5])
    # finite-difference Jacobian of the identity: round-off only
    assert check_symplectic(oscillator, z, 0.0) < 1e-10
    assert check_volume(oscillator, z, 0.0) < 1e-10
    assert check_reversibility(oscillator, z, 0.0, 5) == 0.0


def test_generalized_leapfrog_logreg_checks(rng):
    sys = HamiltonianSystem.riemannian(make_desk_logreg())
    z = sys.random_phase(rng)
    assert check_symplectic(sys, z, 0.05) < 1e-5
    assert check_reversibility(sys, z, 0.1, 1) < 1e-8
    assert check_reversibility(sys, z, 0.1, 10) < 1e-8


def test_volume_gaussian_2d(rng):
    sys = HamiltonianSystem.euclidean(make_gaussian(np.zeros(2), np.array([[1.0, 0.5], [0.5, 2.0]])))
    assert check_volume(sys, sys.random_phase(rng), 0.3) < 1e-6


@pytest.mark.parametrize("kind", ["E", "R"])
def test_symmetry(kind, rng):
    for label, target in builtin_targets():
        if label == "banana" and kind == "R":
            continue
        sys = HamiltonianSystem.euclidean(target) if kind == "E" else HamiltonianSystem.riemannian(target)
        for x in random_positions(target, rng, 5):
            z = Phase(x, sys.sample_momentum(x, rng))
            tol = 1e-10 if kind == "E" else 1e-8
            assert check_symmetry(sys, z, 0.1) < tol * max(1.0, np.abs(z.as_vector()).max())


def test_reversibility_leapfrog_roundoff(rng):
    for label, target in builtin_targets():
        sys = HamiltonianSystem.euclidean(target)
        x = random_positions(target, rng, 1)[0]
        z = Phase(x, sys.sample_momentum(x, rng))
        assert check_reversibility(sys, z, 0.1, 10) < 1e-10 * max(1.0, np.abs(z.as_vector()).max())


def test_order_two_scaling(rng):
    sys = HamiltonianSystem.euclidean(make_gaussian(np.zeros(5), GAUSS5_COV))
    z = sys.random_phase(rng)
    for tau in (0.2, 0.1):
        assert 3.5 <= check_order(sys, z, tau) <= 4.5
    rsys = HamiltonianSystem.riemannian(make_desk_logreg())
    assert 3.5 <= check_order(rsys, rsys.random_phase(rng), 0.1) <= 4.5


def test_callable_target_uses_generic_path(rng):
    # a target with no backend kernel runs through the adapter
    base = make_gaussian(np.zeros(2), np.array([[1.0, 0.2], [0.2, 0.7]]))
    plain = TargetModel(2, base.log_density_unnorm, base.grad, base.hessian, metric=base.metric)
    for a, b in (
        (HamiltonianSystem.euclidean(base), HamiltonianSystem.euclidean(plain)),
        (HamiltonianSystem.riemannian(base), HamiltonianSystem.riemannian(plain)),
    ):
        z = a.random_phase(rng)
        ta = integrate(a, z, IntegratorConfig(0.1, 10))
        tb = integrate(b, z, IntegratorConfig(0.1, 10))
        np.testing.assert_allclose(ta.xs, tb.xs, rtol=1e-12, atol=1e-13)


def test_structure_report_rows(rng):
    sys = HamiltonianSystem.euclidean(make_gaussian(np.zeros(2), np.eye(2)))
    phases = [sys.random_phase(rng) for _ in range(3)]
    rows = structure_report(sys, phases, [0.1, 0.05])
    assert len(rows) == 8 and all(r["passed"] for r in rows)
    assert {r["property"] for r in rows} == {"symplecticity", "reversibility", "volume", "order"}


def test_integrator_config_validation():
    for bad in (dict(tau=np.nan), dict(n_steps=0), dict(fp_tol=0.0), dict(fp_max_iter=0), dict(n_steps=1.5)):
        with pytest.raises(ValueError):
            IntegratorConfig(**bad)


def test_constant_metric_trajectory_is_leapfrog_with_mass(rng):
    G = np.array([[2.0, 0.4, 0.1], [0.4, 1.0, 0.2], [0.1, 0.2, 1.5]])
    t = make_gaussian(np.zeros(3), np.diag([1.0, 0.5, 2.0]))
    e = HamiltonianSystem.euclidean(t, mass=G)
    r = HamiltonianSystem.riemannian(t, MetricField.constant(G))
    z = e.random_phase(rng)
    te, tr = integrate(e, z, IntegratorConfig(0.2, 15)), integrate(r, z, IntegratorConfig(0.2, 15))
    np.testing.assert_array_equal(te.xs, tr.xs)
    np.testing.assert_array_equal(te.ps, tr.ps)
    assert te.delta_H == tr.delta_H
    offset = r.log_det_term(z.x)
    assert tr.energy_offset == offset
    np.testing.assert_allclose(tr.energies, te.energies + offset, rtol=1e-15)
    assert tr.energies[0] == pytest.approx(r.energy(z), rel=1e-14)


def test_delta_h_plain_trajectory(oscillator):
    traj = integrate(oscillator, Phase([1.0], [0.0]), IntegratorConfig(0.2, 3))
    assert traj.delta_H == traj.energies[-1] - traj.energies[0]
