"""Counter-based Gaussian noise streams, coupling mollifiers and initial laws."""

import numpy as np

import config
from app.models.ensemble import Ensemble
from app.models.errors import DomainError

ROLE_IDS = {"system": 0, "limit": 1, "init": 2}

# channels of one particle
SC_X = 0
RC_X = 1
SC_C = 2
RC_C = 3


def stream(seed: int, role: str, channel: int, step: int) -> np.random.Generator:
    """Generator keyed by (seed, role, channel, step); the i-th draw belongs to particle i."""
    if role not in ROLE_IDS:
        raise ValueError(f"role must be one of: {', '.join(ROLE_IDS)}")
    if seed < 0 or step < 0 or channel < 0:
        raise ValueError("seed, channel and step must be non-negative")
    key = np.random.SeedSequence([int(seed), ROLE_IDS[role], int(channel), int(step)]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def brownian_increments(seed: int, role: str, channel: int, step: int, n: int, dt: float) -> np.ndarray:
    """n independent Normal(0, dt) increments; a prefix of a longer draw is the shorter draw."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    return np.sqrt(dt) * stream(seed, role, channel, step).standard_normal(n)


def mollifiers(u, xi: float, R: float):
    """(phi_sc, phi_rc) at switching argument u; phi_sc^2 + phi_rc^2 = 1.

    phi_rc is 0 on [0, xi/2], ramps to 1 on [xi/2, xi], stays 1 on [xi, R], ramps down on [R, R+xi].
    """
    if xi <= 0:
        raise DomainError("xi must be positive")
    if R <= xi:
        raise DomainError(f"R={R} must exceed xi={xi}")
    u_arr = np.abs(np.asarray(u, dtype=float))
    rise = np.clip((u_arr - xi / 2) / (xi / 2), 0.0, 1.0)
    fall = np.clip((R + xi - u_arr) / xi, 0.0, 1.0)
    phi_rc = np.minimum(rise, fall)
    phi_sc = np.sqrt(1.0 - phi_rc ** 2)
    if np.ndim(u) == 0:
        return float(phi_sc), float(phi_rc)
    return phi_sc, phi_rc


def initial_states(n: int, seed: int, init_kind: str = "gaussian", init_scale: float = 1.0) -> np.ndarray:
    """n i.i.d. draws from the initial law; the first k rows do not depend on n."""
    if init_kind not in config.INIT_KINDS:
        raise ValueError(f"init_kind must be one of: {', '.join(config.INIT_KINDS)}")
    if init_scale <= 0:
        raise DomainError("init_scale must be positive")
    if n < 1:
        raise DomainError("need at least one particle")
    columns = []
    for channel in (0, 1):
        gen = stream(seed, "init", channel, 0)
        if init_kind == "gaussian":
            columns.append(init_scale * gen.standard_normal(n))
        else:
            columns.append(gen.laplace(0.0, init_scale, n))
    return np.column_stack(columns)


def initial_ensemble(n: int, seed: int, init_kind: str = "gaussian", init_scale: float = 1.0,
                     role: str = "system") -> Ensemble:
    """Ensemble at t = 0. System and limit built from one seed share their first rows (Zbar_0 = Z_0)."""
    return Ensemble(initial_states(n, seed, init_kind, init_scale), seed, role)
