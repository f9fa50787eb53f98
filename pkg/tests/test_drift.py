import numpy as np
import pytest

import config
from app.api.drift import (convolution, drift_field, intrinsic_drift, kernel_eval, limit_drift,
                           mean_field_drift)
from app.models.ensemble import Ensemble
from app.models.errors import DomainError
from app.models.kernel import Kernel
from app.models.params import ModelParams, State


def test_intrinsic_drift_at_origin(params):
    assert intrinsic_drift(State(0.0, 0.0), params) == (-1.0, 1.0)


def test_intrinsic_drift_cubic_term(params):
    # x - x^3 - c - alpha = 1 - 1 - 0 - 1, gamma x - c + beta = 1 + 1
    assert intrinsic_drift(State(1.0, 0.0), params) == (-1.0, 2.0)


def test_zero_kernels_reduce_to_intrinsic(params, rng):
    states = rng.standard_normal((5, 2))
    zero = Kernel.zero()
    for i in range(5):
        assert mean_field_drift(i, states, zero, zero, params) == intrinsic_drift(State(*states[i]), params)


def test_linear_kernel_mean_field_drift(params):
    ens = Ensemble(np.array([[0.0, 0.0], [2.0, 0.0]]), seed=0)
    kx = Kernel.linear(1.0, 0.0)
    # (1/2)((0 - 0) + (0 - 2)) = -1 on top of the intrinsic -1
    dx, dc = mean_field_drift(0, ens, kx, Kernel.zero(), params)
    assert dx == pytest.approx(-2.0)
    assert dc == pytest.approx(1.0)


def test_drift_field_matches_per_particle_drift(params, rng, small_kernels):
    kx, kc = small_kernels
    states = rng.standard_normal((7, 2))
    field = drift_field(states, kx, kc, params)
    for i in range(7):
        np.testing.assert_allclose(field[i], mean_field_drift(i, states, kx, kc, params), rtol=1e-14)


def test_mean_field_drift_index_out_of_range(params):
    with pytest.raises(IndexError):
        mean_field_drift(3, np.zeros((3, 2)), Kernel.zero(), Kernel.zero(), params)


def test_convolution_independent_of_workers(rng):
    n = 2 * config.PAIRWISE_CHUNK + 3
    targets = rng.standard_normal((n, 2))
    kernel = Kernel.bounded_tanh(0.5, 2.0)
    single = convolution(targets, targets, kernel, workers=1)
    pooled = convolution(targets, targets, kernel, workers=4)
    assert np.array_equal(single, pooled)


def test_limit_drift_uses_proxy(params):
    kx = Kernel.linear(1.0, 0.0)
    proxy = np.array([[1.0, 0.0], [3.0, 0.0]])
    dx, _ = limit_drift(State(0.0, 0.0), proxy, kx, Kernel.zero(), params)
    # intrinsic -1 plus mean of (0 - 1, 0 - 3)
    assert dx == pytest.approx(-3.0)


def test_limit_drift_empty_proxy(params):
    with pytest.raises(DomainError):
        limit_drift(State(0.0, 0.0), np.zeros((0, 2)), Kernel.zero(), Kernel.zero(), params)


def test_kernel_eval_bounded_tanh():
    kernel = Kernel.bounded_tanh(2.0, 0.5)
    assert kernel_eval(kernel, State(1.0, 3.0)) == pytest.approx(2.0 * np.tanh(0.5))
    assert kernel.lipschitz_bound == pytest.approx(1.0)


def test_kernel_rejects_small_declared_constant():
    with pytest.raises(ValueError):
        Kernel.linear(1.0, 0.5, lipschitz_bound=1.0)


def test_custom_kernel_must_vanish_at_origin():
    with pytest.raises(DomainError):
        Kernel.custom(lambda dx, dc: dx + 1.0, 1.0)


def test_kernel_round_trip():
    kernel = Kernel.linear(0.25, -0.5, lipschitz_bound=1.0)
    again = Kernel.from_dict(kernel.to_dict())
    assert again.to_dict() == kernel.to_dict()


def test_params_validation():
    with pytest.raises(DomainError):
        ModelParams(1.0, 1.0, 0.0, 0.5, 0.5)
    with pytest.raises(DomainError):
        ModelParams(1.0, -1.0, 1.0, 0.5, 0.5)
    with pytest.raises(TypeError):
        ModelParams("1", 1.0, 1.0, 0.5, 0.5)
    with pytest.raises(DomainError):
        ModelParams(1.0, 1.0, 1.0, 0.0, 0.0).require_noise()


def test_state_rejects_non_finite():
    with pytest.raises(DomainError):
        State(float("nan"), 0.0)


def test_intrinsic_drift_general_parameters():
    p = ModelParams(0.5, 0.7, 1.5, 0.5, 0.5)
    dx, dc = intrinsic_drift(State(2.0, 1.0), p)
    assert dx == pytest.approx(-7.5)
    assert dc == pytest.approx(2.7)


@pytest.mark.parametrize("kernel", [
    Kernel.linear(0.5, -0.25),
    Kernel.bounded_tanh(2.0, 0.75),
    Kernel.custom(lambda dx, dc: 0.3 * np.sin(dx) - 0.2 * np.sin(dc), 0.5),
])
def test_kernel_is_lipschitz_on_random_pairs(kernel, rng):
    z = 3.0 * rng.standard_t(3, size=(100_000, 2))
    w = z + rng.standard_normal((100_000, 2))
    gap = np.abs(kernel.evaluate(z[:, 0], z[:, 1]) - kernel.evaluate(w[:, 0], w[:, 1]))
    l1 = np.abs(z - w).sum(axis=1)
    assert np.all(gap <= kernel.lipschitz_bound * l1 * (1 + 1e-12))


@pytest.mark.parametrize("kernels", [
    (Kernel.zero(), Kernel.zero()),
    (Kernel.linear(0.5, 0.25), Kernel.bounded_tanh(0.1, 1.0)),
])
def test_single_particle_drifts_agree(params, rng, kernels):
    kx, kc = kernels
    for z in rng.standard_normal((20, 2)):
        single = intrinsic_drift(State(*z), params)
        assert mean_field_drift(0, z[None, :], kx, kc, params) == single
        assert limit_drift(State(*z), z[None, :], kx, kc, params) == single


def test_mean_field_drift_is_permutation_equivariant(params, rng):
    kx, kc = Kernel.linear(0.5, 0.25), Kernel.bounded_tanh(0.1, 1.0)
    states = rng.standard_normal((9, 2))
    perm = rng.permutation(9)
    shuffled = states[perm]
    for i in range(9):
        np.testing.assert_allclose(mean_field_drift(i, shuffled, kx, kc, params),
                                   mean_field_drift(perm[i], states, kx, kc, params), rtol=1e-12, atol=1e-15)
