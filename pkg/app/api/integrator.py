"""Euler-Maruyama steps for the particle system, the limit proxy and the coupled pairs."""

from typing import Optional, Tuple

import numpy as np

import config
from app.api.drift import drift_field
from app.api.noise import RC_C, RC_X, SC_C, SC_X, brownian_increments, mollifiers
from app.logger import default_logger as logger
from app.models.ensemble import CoupledEnsemble, Ensemble
from app.models.errors import DomainError, IntegrationBlowUpError
from app.models.kernel import Kernel
from app.models.params import ModelParams


def _require_dt(dt: float):
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")


def independent_increments(ens: Ensemble, p: ModelParams, dt: float) -> np.ndarray:
    """(sigma_x dB_x, sigma_c dB_c) for every particle from its own streams at the current step."""
    _require_dt(dt)
    n = ens.size
    inc = np.zeros((n, 2))
    if p.sigma_x > 0:
        inc[:, 0] = p.sigma_x * brownian_increments(ens.seed, ens.role, SC_X, ens.step, n, dt)
    if p.sigma_c > 0:
        inc[:, 1] = p.sigma_c * brownian_increments(ens.seed, ens.role, SC_C, ens.step, n, dt)
    return inc


def _advance(ens: Ensemble, drift: np.ndarray, increments: np.ndarray, dt: float, clamp: bool) -> Ensemble:
    new = ens.states + drift * dt + increments
    finite = np.all(np.isfinite(new))
    if not finite or (not clamp and np.max(np.abs(new[:, 0])) > config.BLOWUP_LIMIT):
        detail = "non-finite state" if not finite else f"|x| exceeded {config.BLOWUP_LIMIT:g}"
        err = IntegrationBlowUpError(ens.step + 1, ens.time + dt, f"{ens.role} ensemble, {detail}")
        logger.error(str(err))
        raise err
    return ens.advanced(new, dt)


def step_particles(ens: Ensemble, kx: Kernel, kc: Kernel, p: ModelParams, dt: float,
                   increments: Optional[np.ndarray] = None, clamp: bool = False, workers: int = 1) -> Ensemble:
    """One Euler-Maruyama step of the N-particle system.

    increments replaces the particles' own noise, so a coupled run's system member can be replayed.
    """
    _require_dt(dt)
    if increments is None:
        increments = independent_increments(ens, p, dt)
    elif increments.shape != ens.states.shape:
        raise DomainError(f"increments must have shape {ens.states.shape}, got {increments.shape}")
    drift = drift_field(ens.states, kx, kc, p, clamp=clamp, workers=workers)
    return _advance(ens, drift, increments, dt, clamp)


def step_limit_proxy(ens: Ensemble, kx: Kernel, kc: Kernel, p: ModelParams, dt: float,
                     increments: Optional[np.ndarray] = None, cloud: Optional[np.ndarray] = None,
                     clamp: bool = False, workers: int = 1) -> Ensemble:
    """One step of the limit dynamics, the law replaced by the M-particle cloud itself (or a frozen cloud)."""
    _require_dt(dt)
    if cloud is None and ens.size < 2:
        raise DomainError("the self-interacting proxy needs M >= 2 particles")
    if increments is None:
        increments = independent_increments(ens, p, dt)
    drift = drift_field(ens.states, kx, kc, p, cloud=cloud, clamp=clamp, workers=workers)
    return _advance(ens, drift, increments, dt, clamp)


def check_coupling_noise(coupling: str, p: ModelParams):
    """Reflection on X needs sigma_x > 0; reflection on C needs sigma_x = 0 and sigma_c > 0."""
    if coupling == "reflection_x" and p.sigma_x <= 0:
        raise DomainError("reflection_x coupling needs sigma_x > 0")
    if coupling == "reflection_c" and (p.sigma_x != 0 or p.sigma_c <= 0):
        raise DomainError("reflection_c coupling needs sigma_x = 0 and sigma_c > 0")


def switching_argument(cens: CoupledEnsemble) -> np.ndarray:
    """|X - Xbar| for reflection on X, |2(X - Xbar) - (C - Cbar)| for reflection on C."""
    diff = cens.system.states - cens.paired_limit()
    if cens.coupling == "reflection_c":
        return np.abs(2 * diff[:, 0] - diff[:, 1])
    return np.abs(diff[:, 0])


def coupled_increments(cens: CoupledEnsemble, p: ModelParams, dt: float,
                       R: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Increments of one coupled step: (system (N, 2), limit (M, 2), phi_rc (N,)).

    Mollifiers are evaluated at the start of the step. Limit particles past the N paired ones
    use their own streams.
    """
    _require_dt(dt)
    check_coupling_noise(cens.coupling, p)
    system, limit = cens.system, cens.limit
    n = system.size
    seed, step = system.seed, system.step

    sys_inc = independent_increments(system, p, dt)
    lim_inc = independent_increments(limit, p, dt)
    phi_rc = np.zeros(n)

    if cens.coupling == "synchronous":
        lim_inc[:n] = sys_inc
        return sys_inc, lim_inc, phi_rc

    if R is None:
        raise DomainError("reflection couplings need the ledger radius R")
    phi_sc, phi_rc = mollifiers(switching_argument(cens), cens.xi, R)
    if cens.coupling == "reflection_x":
        sigma, sc, rc, axis = p.sigma_x, SC_X, RC_X, 0
    else:
        sigma, sc, rc, axis = p.sigma_c, SC_C, RC_C, 1
    d_sc = brownian_increments(seed, system.role, sc, step, n, dt)
    d_rc = brownian_increments(seed, system.role, rc, step, n, dt)
    sys_inc[:, axis] = sigma * (phi_sc * d_sc + phi_rc * d_rc)
    lim_inc[:n, axis] = sigma * (phi_sc * d_sc - phi_rc * d_rc)
    # the other channel is shared
    lim_inc[:n, 1 - axis] = sys_inc[:, 1 - axis]
    return sys_inc, lim_inc, phi_rc


def step_coupled(cens: CoupledEnsemble, kx: Kernel, kc: Kernel, p: ModelParams, ledger, dt: float,
                 clamp: bool = False, workers: int = 1) -> CoupledEnsemble:
    """Advance both members of every pair by one step with coupled noise."""
    R = ledger.R if ledger is not None else None
    sys_inc, lim_inc, _ = coupled_increments(cens, p, dt, R)
    cloud = cens.frozen_proxy if cens.proxy_mode == "frozen_proxy" else None
    system = step_particles(cens.system, kx, kc, p, dt, increments=sys_inc, clamp=clamp, workers=workers)
    limit = step_limit_proxy(cens.limit, kx, kc, p, dt, increments=lim_inc, cloud=cloud,
                             clamp=clamp, workers=workers)
    return cens.advanced(system, limit)
