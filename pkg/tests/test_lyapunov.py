import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from app.api.lyapunov import (H, H_tilde, H_tilde_log, check_kernel_admissibility, check_lambda, derive_B,
                              derive_lambda, derive_lyapunov_constants, generator_H, generator_H_bound,
                              lower_bound_slacks, pair_moment_slack, sup_tilted, tilde_sandwich_slacks,
                              tilt_from)
from app.models.errors import AdmissibilityError, DomainError
from app.models.kernel import Kernel
from app.models.params import ModelParams, State

QUADRATIC = ModelParams(0.0, 0.0, 1.0, 0.5, 0.5)


def heavy_states(rng, n):
    return np.vstack([2 * rng.standard_normal((n, 2)), 2 * rng.standard_t(3, size=(n, 2))])


def test_H_value(params):
    assert H(State(1.0, 0.0), params) == pytest.approx(3.5)


def test_H_vectorized_matches_scalar(params, rng):
    states = rng.standard_normal((4, 2))
    values = H(states, params)
    for row, value in zip(states, values):
        assert H(State(*row), params) == pytest.approx(value)


def test_H_tilde_at_unit_energy():
    # H = 1 with a = 1: (2/a^2)(e - e + 1) = 2
    z = State(math.sqrt(2.0), 0.0)
    assert H(z, QUADRATIC) == pytest.approx(1.0)
    assert H_tilde(z, 1.0, QUADRATIC) == pytest.approx(2.0, rel=1e-12)


def test_H_tilde_matches_quadrature():
    z = State(2 * math.sqrt(2.0), 0.0)
    expected, _ = quad(lambda u: math.exp(0.5 * math.sqrt(u)), 0.0, H(z, QUADRATIC), epsabs=0, epsrel=1e-13)
    assert H_tilde(z, 0.5, QUADRATIC) == pytest.approx(expected, rel=1e-10)


def test_H_tilde_log_consistent(params, rng):
    states = rng.standard_normal((50, 2))
    a = tilt_from(1.0, params)
    np.testing.assert_allclose(H_tilde_log(states, a, params), np.log(H_tilde(states, a, params)), rtol=1e-10)


def test_H_tilde_log_far_state_is_finite(params):
    value = H_tilde_log(State(1e5, -1e5), 1.0, params)
    assert math.isfinite(value)


def test_H_tilde_rejects_non_positive_tilt(params):
    with pytest.raises(DomainError):
        H_tilde(State(0.0, 0.0), 0.0, params)


def test_B_for_pure_quartic():
    p = ModelParams(0.0, 0.0, 1.0, 0.0, 0.0)
    # sup(-x^4 + 1.5 x^2) = 0.5625 at x^2 = 0.75
    assert derive_B(p, 0.0, 0.0, 1.0) == pytest.approx(0.5625, rel=1e-12)


def test_lambda_admissibility():
    assert derive_lambda(0.0, 0.0) == pytest.approx(1.0)
    with pytest.raises(AdmissibilityError):
        check_lambda(0.0, 0.0, 2.0)
    with pytest.raises(AdmissibilityError):
        derive_lambda(8.0, 0.0)


def test_sup_tilted_matches_numeric_maximum():
    result = minimize_scalar(lambda h: -math.exp(math.sqrt(h)) * (1 - h), bounds=(0.0, 1.0), method="bounded",
                             options={"xatol": 1e-12})
    assert sup_tilted(1.0, 1.0, 1.0) == pytest.approx(-result.fun, rel=1e-8)


def test_sup_tilted_non_positive_offset():
    assert sup_tilted(-2.0, 1.0, 1.0) == -2.0
    assert sup_tilted(0.0, 1.0, 1.0) == 0.0


def test_quadratic_lower_bounds_hold(params, rng):
    states = heavy_states(rng, 5000)
    for name, slack in lower_bound_slacks(states, params).items():
        assert np.all(slack >= -1e-9 * (1 + H(states, params))), name


def test_pair_moment_bound_holds(params, rng):
    z = heavy_states(rng, 5000)
    zbar = heavy_states(rng, 5000)
    assert np.all(pair_moment_slack(z, zbar, params, 6.875) >= 0)


def test_tilde_sandwiches_hold(params, rng):
    states = heavy_states(rng, 5000)
    a = tilt_from(1.0, params)
    scale = 1 + H(states, params)
    for name, slack in tilde_sandwich_slacks(states, a, params).items():
        assert np.all(slack / scale >= -1e-9), name


def test_generator_bound_with_zero_kernels(params, rng):
    consts = derive_lyapunov_constants(params, 0.0, 0.0)
    proxy = rng.standard_normal((32, 2))
    zero = Kernel.zero()
    for row in heavy_states(rng, 200):
        z = State(*row)
        assert generator_H(z, proxy, zero, zero, params) <= generator_H_bound(z, proxy, consts, params) + 1e-9 * (
            1 + H(z, params) ** 2)


def test_lyapunov_constants_record_branches(params):
    consts = derive_lyapunov_constants(params, 0.1, 0.0)
    assert set(consts.B_tilde_branches) == {"nonlinear", "particle"}
    assert consts.B_tilde == pytest.approx(max(consts.B_tilde_branches.values()))
    assert consts.B > 0


def test_kernel_admissibility_zero_kernels(params, ledger):
    assert check_kernel_admissibility(params, 0.0, 0.0, ledger).passed


def test_kernel_admissibility_large_kernels(params, ledger):
    report = check_kernel_admissibility(params, 4.0, 0.2, ledger)
    assert not report.passed
