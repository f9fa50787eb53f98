import numpy as np
import pytest

import config
from app.api.integrator import (check_coupling_noise, coupled_increments, step_coupled, step_limit_proxy,
                                step_particles, switching_argument)
from app.api.noise import initial_ensemble
from app.models.ensemble import CoupledEnsemble, Ensemble
from app.models.errors import DomainError, IntegrationBlowUpError
from app.models.kernel import Kernel
from app.models.params import ModelParams

NOISELESS = ModelParams(1.0, 1.0, 1.0, 0.0, 0.0)
ZERO = Kernel.zero()


def pair(n, m, coupling, seed=3, spread=0.0):
    system = initial_ensemble(n, seed, role="system")
    limit = initial_ensemble(m, seed, role="limit")
    if spread:
        limit = Ensemble(limit.states + spread, seed, "limit")
    return CoupledEnsemble(system, limit, coupling, xi=1e-3)


def test_noiseless_euler_step():
    ens = Ensemble(np.zeros((1, 2)), seed=0)
    nxt = step_particles(ens, ZERO, ZERO, NOISELESS, 0.1)
    np.testing.assert_allclose(nxt.states, [[-0.1, 0.1]])
    assert nxt.step == 1
    assert nxt.time == pytest.approx(0.1)


def test_blow_up_is_reported():
    ens = Ensemble(np.array([[1e3, 0.0]]), seed=0)
    with pytest.raises(IntegrationBlowUpError) as info:
        step_particles(ens, ZERO, ZERO, NOISELESS, 1.0)
    assert info.value.step == 1


def test_clamp_prevents_blow_up():
    ens = Ensemble(np.array([[1e3, 0.0]]), seed=0)
    nxt = step_particles(ens, ZERO, ZERO, NOISELESS, 1.0, clamp=True)
    assert np.all(np.isfinite(nxt.states))


def test_step_rejects_bad_dt(params):
    with pytest.raises(DomainError):
        step_particles(initial_ensemble(2, 0), ZERO, ZERO, params, 0.0)


def test_step_is_seed_deterministic(params, small_kernels):
    kx, kc = small_kernels
    a = step_particles(initial_ensemble(5, 9), kx, kc, params, 0.01)
    b = step_particles(initial_ensemble(5, 9), kx, kc, params, 0.01)
    np.testing.assert_array_equal(a.states, b.states)


def test_step_independent_of_workers(params):
    kx = Kernel.bounded_tanh(0.5, 1.0)
    ens = initial_ensemble(config.PAIRWISE_CHUNK + 5, 2)
    a = step_particles(ens, kx, ZERO, params, 0.01, workers=1)
    b = step_particles(ens, kx, ZERO, params, 0.01, workers=4)
    np.testing.assert_array_equal(a.states, b.states)


def test_limit_proxy_needs_two_particles(params):
    with pytest.raises(DomainError):
        step_limit_proxy(initial_ensemble(1, 0, role="limit"), ZERO, ZERO, params, 0.01)


def test_synchronous_increments_are_shared(params):
    cens = pair(4, 8, "synchronous")
    sys_inc, lim_inc, phi_rc = coupled_increments(cens, params, 0.01)
    np.testing.assert_array_equal(sys_inc, lim_inc[:4])
    assert not np.array_equal(lim_inc[4:], 0)
    assert np.all(phi_rc == 0)


def test_reflection_x_flips_far_pairs(params):
    cens = pair(4, 8, "reflection_x", spread=1.0)
    sys_inc, lim_inc, phi_rc = coupled_increments(cens, params, 0.01, R=100.0)
    np.testing.assert_array_equal(phi_rc, 1.0)
    np.testing.assert_allclose(sys_inc[:, 0], -lim_inc[:4, 0])
    np.testing.assert_array_equal(sys_inc[:, 1], lim_inc[:4, 1])


def test_reflection_x_is_synchronous_on_the_diagonal(params):
    cens = pair(4, 8, "reflection_x")
    sys_inc, lim_inc, phi_rc = coupled_increments(cens, params, 0.01, R=100.0)
    np.testing.assert_array_equal(phi_rc, 0.0)
    np.testing.assert_array_equal(sys_inc, lim_inc[:4])


def test_reflection_needs_radius(params):
    with pytest.raises(DomainError):
        coupled_increments(pair(2, 4, "reflection_x"), params, 0.01)


def test_reflection_c_noise_requirements(params):
    with pytest.raises(DomainError):
        check_coupling_noise("reflection_c", params)
    check_coupling_noise("reflection_c", ModelParams(1.0, 1.0, 1.0, 0.0, 0.5))
    with pytest.raises(DomainError):
        check_coupling_noise("reflection_x", ModelParams(1.0, 1.0, 1.0, 0.0, 0.5))


def test_reflection_c_switching_argument():
    p = ModelParams(1.0, 1.0, 1.0, 0.0, 0.5)
    cens = pair(3, 6, "reflection_c", spread=1.0)
    # dx = dc = -1, so |2 dx - dc| = 1
    np.testing.assert_allclose(switching_argument(cens), 1.0)
    sys_inc, lim_inc, _ = coupled_increments(cens, p, 0.01, R=100.0)
    assert np.all(sys_inc[:, 0] == 0)
    np.testing.assert_allclose(sys_inc[:, 1], -lim_inc[:3, 1])


def test_coupled_system_member_replays(params, small_kernels, ledger):
    kx, kc = small_kernels
    cens = pair(4, 8, "reflection_x", spread=0.5)
    sys_inc, _, _ = coupled_increments(cens, params, 0.01, ledger.R)
    replay = step_particles(cens.system, kx, kc, params, 0.01, increments=sys_inc)
    coupled = step_coupled(cens, kx, kc, params, ledger, 0.01)
    np.testing.assert_array_equal(replay.states, coupled.system.states)
    assert coupled.limit.step == 1


def test_equal_pairs_stay_equal_without_interaction(params, ledger):
    cens = pair(4, 4, "synchronous")
    for _ in range(5):
        cens = step_coupled(cens, ZERO, ZERO, params, ledger, 0.01)
    np.testing.assert_array_equal(cens.system.states, cens.paired_limit())


def test_frozen_proxy_is_the_convolution_cloud(params, small_kernels, ledger):
    kx, kc = small_kernels
    system = initial_ensemble(4, 3, role="system")
    limit = initial_ensemble(4, 3, role="limit")
    cloud = initial_ensemble(16, 11, role="limit").states.copy()
    cens = CoupledEnsemble(system, limit, "synchronous", xi=1e-3, proxy_mode="frozen_proxy", frozen_proxy=cloud)
    _, lim_inc, _ = coupled_increments(cens, params, 0.01, ledger.R)
    expected = step_limit_proxy(cens.limit, kx, kc, params, 0.01, increments=lim_inc, cloud=cloud)
    stepped = step_coupled(cens, kx, kc, params, ledger, 0.01)
    np.testing.assert_array_equal(stepped.limit.states, expected.states)
    assert stepped.proxy_mode == "frozen_proxy"
    np.testing.assert_array_equal(stepped.convolution_cloud(), cloud)
    cloud[:] = 0.0
    assert np.any(stepped.frozen_proxy != 0.0)


def test_frozen_proxy_requirements():
    system = initial_ensemble(4, 3, role="system")
    with pytest.raises(ValueError):
        CoupledEnsemble(system, initial_ensemble(4, 3, role="limit"), "synchronous", 1e-3, "frozen_proxy")
    with pytest.raises(ValueError):
        CoupledEnsemble(system, initial_ensemble(8, 3, role="limit"), "synchronous", 1e-3, "frozen_proxy",
                        frozen_proxy=np.zeros((8, 2)))
