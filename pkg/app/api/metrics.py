"""Wasserstein estimates, replica statistics and rate fits."""

import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

import config
from app.api.drift import convolution
from app.logger import default_logger as logger
from app.models.ensemble import CoupledEnsemble
from app.models.errors import DomainError
from app.models.kernel import Kernel
from app.models.params import ModelParams, as_states
from app.models.records import RateFit, SampleCloud, SeriesEstimate


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, SampleCloud) else as_states(cloud)


def wasserstein_exact(a, b, p: int = 1) -> float:
    """Exact W_p between two uniform clouds of equal size by optimal assignment."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    xa, xb = _points(a), _points(b)
    if xa.shape[0] != xb.shape[0]:
        raise DomainError(f"clouds differ in size: {xa.shape[0]} vs {xb.shape[0]}")
    if xa.shape[0] > config.EXACT_OT_MAX:
        raise DomainError(f"exact OT is limited to {config.EXACT_OT_MAX} points, got {xa.shape[0]}")
    cost = cdist(xa, xb, "cityblock") if p == 1 else cdist(xa, xb, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean() ** (1.0 / p))


def _pairs(cens):
    if isinstance(cens, CoupledEnsemble):
        return cens.system.states, cens.paired_limit()
    system, limit = cens
    return as_states(system), as_states(limit)


def weighted_mean_distance(cens, delta: float) -> float:
    """Mean of |x - xbar| + delta |c - cbar| over the coupled pairs."""
    zs, zbars = _pairs(cens)
    diff = np.abs(zs - zbars)
    return float(np.mean(diff[:, 0] + delta * diff[:, 1]))


def coupled_w1_bound(cens, k: int = 1, delta: Optional[float] = None) -> float:
    """k times the mean L1 distance of the coupled pairs, an upper bound on W1 of the k-marginals."""
    zs, zbars = _pairs(cens)
    n = zs.shape[0]
    if not 1 <= k <= n:
        raise DomainError(f"k must lie in [1, N={n}], got {k}")
    bound = k * float(np.mean(np.abs(zs - zbars).sum(axis=1)))
    if delta is not None:
        logger.debug(f"W1 bound {bound:.6g}, weighted E[r] = {weighted_mean_distance((zs, zbars), delta):.6g}")
    return bound


def expectation_series(records: Sequence[List[dict]], observable: str) -> SeriesEstimate:
    """Mean and standard error across replicas of one observable, per sample time."""
    if not records or not records[0]:
        raise ValueError("no records to summarize")
    lengths = {len(r) for r in records}
    if len(lengths) != 1:
        raise ValueError("replicas have different numbers of samples")
    t = np.array([row["t"] for row in records[0]], dtype=float)
    values = np.array([[row[observable] for row in rep] for rep in records], dtype=float)
    m = values.shape[0]
    mean = values.mean(axis=0)
    if m < config.MIN_REPLICAS_FOR_ERRORS:
        logger.warning(f"{observable}: one replica, standard errors unavailable")
        return SeriesEstimate(t, mean, None, m)
    stderr = values.std(axis=0, ddof=1) / math.sqrt(m)
    return SeriesEstimate(t, mean, stderr, m)


def _linear_fit(x: np.ndarray, y: np.ndarray) -> RateFit:
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 points for a fit")
    res = stats.linregress(x, y)
    half = stats.t.ppf(0.975, n - 2) * res.stderr
    r2 = min(1.0, max(0.0, res.rvalue ** 2))
    return RateFit(float(res.slope), float(res.intercept), float(res.slope - half),
                   float(res.slope + half), r2, n)


def fit_scaling(xs, ys) -> RateFit:
    """Least squares on (log x, log y) with a 95% interval on the slope."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError("xs and ys must have the same length")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise DomainError("scaling fits need positive data")
    return _linear_fit(np.log(xs), np.log(ys))


def fit_exponential_envelope(ts, ys) -> RateFit:
    """Least squares on (t, log y): the slope is the exponential growth rate."""
    ts = np.asarray(ts, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if ts.shape != ys.shape:
        raise ValueError("ts and ys must have the same length")
    if np.any(ys <= 0):
        raise DomainError("exponential fits need positive data")
    return _linear_fit(ts, np.log(ys))


def interaction_lln_bound(L: float, n: int, second_moment: float) -> float:
    """sqrt(8 L^2 E|Z|_1^2 / N): law-of-large-numbers bound on the empirical interaction error."""
    if n < 1:
        raise DomainError("n must be positive")
    return math.sqrt(8 * L ** 2 * second_moment / n)


def empirical_interaction_deviation(cloud, kernel: Kernel, n: int, seed: int = 0) -> float:
    """Monte Carlo E|(1/n) sum_j K(Z_i - Z_j) - K * mu(Z_i)| with mu the full cloud and n subsampled points."""
    points = _points(cloud)
    if not 1 <= n <= points.shape[0]:
        raise DomainError(f"n must lie in [1, {points.shape[0]}]")
    rng = np.random.default_rng(seed)
    sub = points[rng.choice(points.shape[0], size=n, replace=False)]
    empirical = convolution(sub, sub, kernel)
    limit = convolution(sub, points, kernel)
    return float(np.mean(np.abs(empirical - limit)))


def l1_second_moment(cloud) -> float:
    """E |Z|_1^2 of a cloud."""
    points = _points(cloud)
    return float(np.mean(np.abs(points).sum(axis=1) ** 2))


def nonuniform_constants(p: ModelParams, L_X: float, L_C: float, EH0: float, B: float,
                         lam: float) -> Dict[str, float]:
    """Constants of E r_t <= C1 exp(C2 t) / sqrt(N) under synchronous coupling from equal starts.

    C01 bounds sup_t E H, C02 bounds sup_t E|Z|_1^2; C2 is the Gronwall rate of the pair difference.
    """
    C01 = max(EH0, B / lam)
    C02 = 8 * C01 / min(p.gamma, 1.0)
    C2 = 1 + p.gamma + 2 * L_X + 2 * L_C
    C1 = (interaction_lln_bound(L_X, 1, C02) + interaction_lln_bound(L_C, 1, C02)) / C2
    return {"C01": C01, "C02": C02, "C1": C1, "C2": C2}


def replica_seed(seed: int, k: int) -> int:
    """Seed of replica k: the seed itself for k = 0, else the first word of SeedSequence([seed, k])."""
    if k < 0:
        raise ValueError("replica index must be non-negative")
    if k == 0:
        return int(seed)
    return int(np.random.SeedSequence([int(seed), int(k)]).generate_state(1, np.uint64)[0])
