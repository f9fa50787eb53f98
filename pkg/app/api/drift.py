"""Drift fields of the N-particle FitzHugh-Nagumo system and of its McKean-Vlasov limit."""

from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Tuple

import numpy as np

import config
from app.logger import default_logger as logger
from app.models.ensemble import Ensemble
from app.models.errors import DomainError
from app.models.kernel import Kernel
from app.models.params import ModelParams, State, as_states

_clamp_warned = False


def kernel_eval(k: Kernel, dz: State) -> float:
    """K(dz) for one state difference."""
    if not isinstance(dz, State):
        dz = State(*dz)
    return float(np.asarray(k.evaluate(np.array([dz.x]), np.array([dz.c])))[0])


def _cubic(x: np.ndarray, clamp: bool) -> np.ndarray:
    global _clamp_warned
    if not clamp:
        return x ** 3
    if not _clamp_warned and np.any(np.abs(x) > config.X_MAX):
        logger.warning(f"clamp active: |x| capped at {config.X_MAX:g} inside the cubic term")
        _clamp_warned = True
    xc = np.clip(x, -config.X_MAX, config.X_MAX)
    return xc ** 3


def intrinsic_field(states: np.ndarray, p: ModelParams, clamp: bool = False) -> np.ndarray:
    """Vectorized (x - x^3 - c - alpha, gamma x - c + beta) for an (n, 2) array."""
    x = states[:, 0]
    c = states[:, 1]
    out = np.empty_like(states)
    out[:, 0] = x - _cubic(x, clamp) - c - p.alpha
    out[:, 1] = p.gamma * x - c + p.beta
    return out


def intrinsic_drift(z: State, p: ModelParams, clamp: bool = False) -> Tuple[float, float]:
    """Single-neuron drift (x - x^3 - c - alpha, gamma x - c + beta)."""
    arr = as_states(z)
    dx, dc = intrinsic_field(arr, p, clamp)[0]
    return float(dx), float(dc)


def _chunk_bounds(n: int):
    step = config.PAIRWISE_CHUNK
    return [(lo, min(lo + step, n)) for lo in range(0, n, step)]


def convolution(targets: np.ndarray, cloud: np.ndarray, k: Kernel, workers: int = 1) -> np.ndarray:
    """(1/M) sum_j K(target_i - cloud_j) for every target row.

    Rows are processed in fixed-size chunks; each row's sum runs over the whole cloud in one
    reduction, so the result does not depend on the number of workers.
    """
    n = targets.shape[0]
    if k.is_zero:
        return np.zeros(n)
    m = cloud.shape[0]
    if m == 0:
        raise DomainError("convolution against an empty cloud")

    def rows(bounds):
        lo, hi = bounds
        dx = targets[lo:hi, 0:1] - cloud[None, :, 0]
        dc = targets[lo:hi, 1:2] - cloud[None, :, 1]
        return k.evaluate(dx, dc).sum(axis=1) / m

    chunks = _chunk_bounds(n)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(rows, chunks))
    else:
        parts = [rows(b) for b in chunks]
    return np.concatenate(parts)


def drift_field(states: np.ndarray, kx: Kernel, kc: Kernel, p: ModelParams,
                cloud: Optional[np.ndarray] = None, clamp: bool = False, workers: int = 1) -> np.ndarray:
    """Intrinsic drift plus empirical convolution against `cloud` (the states themselves by default)."""
    cloud = states if cloud is None else cloud
    out = intrinsic_field(states, p, clamp)
    out[:, 0] += convolution(states, cloud, kx, workers)
    out[:, 1] += convolution(states, cloud, kc, workers)
    return out


def mean_field_drift(i: int, ensemble, kx: Kernel, kc: Kernel, p: ModelParams) -> Tuple[float, float]:
    """Drift of particle i (0-based) in the N-particle system, self term included."""
    states = ensemble.states if isinstance(ensemble, Ensemble) else as_states(ensemble)
    n = states.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"particle index {i} out of range for N={n}")
    row = states[i:i + 1]
    dx, dc = drift_field(row, kx, kc, p, cloud=states)[0]
    return float(dx), float(dc)


def limit_drift(z: State, proxy, kx: Kernel, kc: Kernel, p: ModelParams) -> Tuple[float, float]:
    """Drift of the McKean-Vlasov equation with the limit law replaced by the proxy's empirical measure."""
    cloud = proxy.states if isinstance(proxy, Ensemble) else np.asarray(proxy, dtype=float)
    if cloud.size == 0:
        raise DomainError("limit_drift needs a non-empty proxy")
    cloud = as_states(cloud)
    dx, dc = drift_field(as_states(z), kx, kc, p, cloud=cloud)[0]
    return float(dx), float(dc)

