"""Lyapunov functions H, H_tilde and the rate constants lambda, B, B_tilde."""

import math
from typing import Dict, Optional, Union

import numpy as np
from scipy.optimize import brentq

from app.api.drift import limit_drift
from app.logger import default_logger as logger
from app.models.errors import AdmissibilityError, DerivationError, DomainError
from app.models.kernel import Kernel
from app.models.ledger import LyapunovConstants
from app.models.params import ModelParams, State, as_states
from app.models.records import CheckReport

# c^2 coefficient of the drift inequality: L_X/8 + L_C(2 + 1/8)
_KX_WEIGHT = 1 / 8
_KC_WEIGHT = 2 + 1 / 8


def H(z: Union[State, np.ndarray], p: ModelParams):
    """gamma x^2/2 + beta x + c^2/2 + alpha c + H0; a float for a State, an array for (n, 2) input."""
    arr = as_states(z)
    x = arr[:, 0]
    c = arr[:, 1]
    values = p.gamma * x ** 2 / 2 + p.beta * x + c ** 2 / 2 + p.alpha * c + p.H0
    # the completed squares are >= 0; rounding can leave -1e-16
    values = np.maximum(values, 0.0)
    if isinstance(z, State):
        return float(values[0])
    return values


def _tilde_from_sqrt(s: np.ndarray, a: float) -> np.ndarray:
    # int_0^{s^2} exp(a sqrt(u)) du = (2/a^2)(a s e^{a s} - expm1(a s))
    t = a * s
    with np.errstate(over="ignore", invalid="ignore"):
        val = (2.0 / a ** 2) * (t * np.exp(t) - np.expm1(t))
    return np.where(t == 0, 0.0, np.maximum(val, 0.0))


def H_tilde(z, a: float, p: ModelParams):
    """(2/a^2) e^{a sqrt(H)} (a sqrt(H) - 1) + 2/a^2; may overflow to inf far from the origin."""
    if a <= 0:
        raise DomainError("the exponential tilt a must be positive")
    h = H(z, p)
    values = _tilde_from_sqrt(np.sqrt(np.atleast_1d(h)), a)
    if isinstance(z, State):
        return float(values[0])
    return values


def H_tilde_log(z, a: float, p: ModelParams):
    """log H_tilde without overflow; -inf where H = 0."""
    if a <= 0:
        raise DomainError("the exponential tilt a must be positive")
    h = H(z, p)
    s = np.sqrt(np.atleast_1d(h))
    t = a * s
    out = np.full(t.shape, -np.inf)
    small = (t > 0) & (t <= 1.0)
    big = t > 1.0
    if np.any(small):
        out[small] = np.log(_tilde_from_sqrt(s[small], a))
    if np.any(big):
        tb = t[big]
        out[big] = math.log(2.0 / a ** 2) + tb + np.log(tb - 1.0 + np.exp(-tb))
    if isinstance(z, State):
        return float(out[0])
    return out


def tilt_from(a_tilde: float, p: ModelParams) -> float:
    """a = a_tilde / (4 sqrt(2) max(sqrt(gamma), 1))."""
    if a_tilde <= 0:
        raise DomainError("a_tilde must be positive")
    return a_tilde / (4 * math.sqrt(2) * max(math.sqrt(p.gamma), 1.0))


def lower_bound_slacks(z, p: ModelParams) -> Dict[str, np.ndarray]:
    """H minus its two quadratic lower bounds; both are >= 0 everywhere."""
    arr = as_states(z)
    x, c = arr[:, 0], arr[:, 1]
    h = H(arr, p)
    return {
        "H >= gamma x^2/4 + c^2/4": h - (p.gamma * x ** 2 / 4 + c ** 2 / 4),
        "H >= ((gamma x + beta)^2 + (c + alpha)^2)/(2 max(gamma, 1))":
            h - ((p.gamma * x + p.beta) ** 2 + (c + p.alpha) ** 2) / (2 * max(p.gamma, 1.0)),
    }


def pair_moment_slack(z, zbar, p: ModelParams, delta: float) -> np.ndarray:
    """16(1+delta^2)/min(gamma,1) (H(z) + H(zbar)) - (|x - xbar| + delta |c - cbar|)^2."""
    a, b = as_states(z), as_states(zbar)
    r = np.abs(a[:, 0] - b[:, 0]) + delta * np.abs(a[:, 1] - b[:, 1])
    return 16 * (1 + delta ** 2) / min(p.gamma, 1.0) * (H(a, p) + H(b, p)) - r ** 2


def tilde_sandwich_slacks(z, a: float, p: ModelParams) -> Dict[str, np.ndarray]:
    """Slacks of the bounds on H_tilde in terms of H and exp(a sqrt(H)), all divided by exp(a sqrt(H)).

    The scaled form stays finite for any state; the second and fourth bounds are attained
    at a sqrt(H) = a^2/2 and a sqrt(H) = 1, so their slacks are zero up to rounding there.
    """
    if a <= 0:
        raise DomainError("the exponential tilt a must be positive")
    h = H(as_states(z), p)
    s = np.sqrt(h)
    t = a * s
    decay = np.exp(-t)
    # H_tilde exp(-t) = (2/a^2)(t - 1 + exp(-t))
    scaled = (2 / a ** 2) * (t + np.expm1(-t))
    return {
        "H exp(a sqrt H) >= H~": h - scaled,
        "H~ >= exp(a sqrt H) - (2/a^2)(exp(a^2/2) - 1)": scaled - 1 + (2 / a ** 2) * math.expm1(a ** 2 / 2) * decay,
        "(2/a) sqrt(H) exp(a sqrt H) >= H~": (2 / a) * s - scaled,
        "H~ >= (1/a) sqrt(H) exp(a sqrt H) - (e-2)/a^2": scaled - s / a + (math.e - 2) / a ** 2 * decay,
        "H~ >= H": scaled - h * decay,
    }


def lambda_upper(L_X: float, L_C: float) -> float:
    """Supremum of admissible decay rates: 2(1 - L_X/8 - L_C(2+1/8))."""
    return 2 * (1 - _KX_WEIGHT * L_X - _KC_WEIGHT * L_C)


def check_lambda(L_X: float, L_C: float, lam: float):
    """Raise AdmissibilityError unless 0 < lambda and L_X/8 + L_C(2+1/8) < 1 - lambda/2."""
    if lam <= 0:
        raise AdmissibilityError(f"lambda must be positive, got {lam}")
    if not _KX_WEIGHT * L_X + _KC_WEIGHT * L_C < 1 - lam / 2:
        raise AdmissibilityError(
            f"L_X/8 + L_C(2+1/8) = {_KX_WEIGHT * L_X + _KC_WEIGHT * L_C:.6g} "
            f"is not below 1 - lambda/2 = {1 - lam / 2:.6g}")


def derive_lambda(L_X: float, L_C: float, override: Optional[float] = None) -> float:
    """Midpoint of the admissible interval unless overridden."""
    upper = lambda_upper(L_X, L_C)
    if upper <= 0:
        raise AdmissibilityError(f"kernel constants L_X={L_X}, L_C={L_C} leave no admissible lambda")
    lam = upper / 2 if override is None else float(override)
    check_lambda(L_X, L_C, lam)
    return lam


def _sup_x_part(p: ModelParams, L_X: float, L_C: float, lam: float) -> float:
    """sup over x of -gamma x^4 - beta x^3 + q2 x^2 + (1+lambda) beta x."""
    g, b = p.gamma, p.beta
    q2 = (1 + lam / 2) * g + L_X * (1 + 2 * g + 16 * g ** 2) + 17 * L_C
    poly = np.array([-g, -b, q2, (1 + lam) * b, 0.0])
    dpoly = np.polyder(poly)

    def deriv(x):
        return np.polyval(dpoly, x)

    candidates = [0.0]
    for root in np.roots(dpoly):
        if abs(root.imag) > 1e-9 * (1 + abs(root.real)):
            continue
        x = float(root.real)
        h = 1e-6 * (1 + abs(x))
        lo, hi = x - h, x + h
        if deriv(lo) * deriv(hi) < 0:
            x = brentq(deriv, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        candidates.append(x)
    return max(0.0, max(float(np.polyval(poly, x)) for x in candidates))


def _sup_c_part(p: ModelParams, L_X: float, L_C: float, lam: float) -> float:
    """sup over c of k c^2 - (1-lambda) alpha c with k < 0."""
    k = _KX_WEIGHT * L_X + _KC_WEIGHT * L_C - (1 - lam / 2)
    if k >= 0:
        raise AdmissibilityError("c^2 coefficient is not negative; lambda is not admissible")
    lin = (1 - lam) * p.alpha
    return lin ** 2 / (-4 * k)


def derive_A(p: ModelParams, L_X: float, L_C: float, lam: float) -> float:
    """The polynomial supremum A >= 0 of the drift inequality, separable in x and c."""
    check_lambda(L_X, L_C, lam)
    return _sup_x_part(p, L_X, L_C, lam) + _sup_c_part(p, L_X, L_C, lam)


def derive_B(p: ModelParams, L_X: float, L_C: float, lam: float) -> float:
    """B = A + sigma_x^2 gamma/2 + sigma_c^2/2 + lambda H0 + 17 beta^2 L_X + 17 alpha^2 L_C."""
    A = derive_A(p, L_X, L_C, lam)
    return (A + p.sigma_x ** 2 * p.gamma / 2 + p.sigma_c ** 2 / 2 + lam * p.H0
            + 17 * p.beta ** 2 * L_X + 17 * p.alpha ** 2 * L_C)


def sup_tilted(b: float, slope: float, a: float) -> float:
    """sup over h >= 0 of exp(a sqrt(h)) (b - slope h).

    With u = sqrt(h) the maximizer solves a slope u^2 + 2 slope u - a b = 0.
    """
    if slope <= 0:
        raise DomainError("slope must be positive")
    if a < 0:
        raise DomainError("a must be non-negative")
    if b <= 0:
        return float(b)
    u = a * b / (slope + math.sqrt(slope ** 2 + a ** 2 * slope * b))
    try:
        return math.exp(a * u) * (b - slope * u ** 2)
    except OverflowError:
        raise DerivationError("B_tilde", "exponential supremum overflows; lower a_tilde") from None


def young_term(p: ModelParams, lam: float, a: float) -> float:
    """(1/2 max(sigma_x^2, sigma_c^2) max(gamma, 1))^2 a^2 / (2 lambda)."""
    half_sigma = 0.5 * max(p.sigma_x ** 2, p.sigma_c ** 2) * max(p.gamma, 1.0)
    return half_sigma ** 2 * a ** 2 / (2 * lam)


def B_tilde_branches(p: ModelParams, L_X: float, L_C: float, lam: float, a: float,
                     C_init2: float, B: Optional[float] = None) -> Dict[str, float]:
    """Offsets of H_tilde for the nonlinear process and for the particle system."""
    if lam <= 0:
        raise DomainError("lambda must be positive")
    if a <= 0:
        raise DomainError("a must be positive")
    B = derive_B(p, L_X, L_C, lam) if B is None else B
    k = LyapunovConstants.coefficients(p.gamma)
    moment = (k["alpha_X"] * L_X + k["beta_X"] * L_C + k["alpha_C"] * L_X + k["beta_C"] * L_C) * C_init2
    base = B + young_term(p, lam, a)
    return {
        "nonlinear": sup_tilted(base + moment, lam / 4, a),
        "particle": sup_tilted(base, lam / 8, a),
    }


def derive_B_tilde(p: ModelParams, L_X: float, L_C: float, lam: float, a: float,
                   C_init2: float, B: Optional[float] = None) -> float:
    """One B_tilde valid for every branch (their maximum)."""
    branches = B_tilde_branches(p, L_X, L_C, lam, a, C_init2, B)
    for name, value in branches.items():
        logger.info(f"B_tilde branch {name}: {value:.6g}")
    return max(0.0, max(branches.values()))


def initial_H_bound(p: ModelParams, a_tilde: float, C_init_exp: float) -> float:
    """Bound on E H(Z_0) from E exp(a_tilde(|X_0| + |C_0|)) <= C_init_exp."""
    if a_tilde <= 0 or C_init_exp <= 0:
        raise DomainError("a_tilde and C_init_exp must be positive")
    return max(p.gamma, 1.0) * 2 * C_init_exp / a_tilde ** 2 + 1.5 * p.H0


def second_moment_bound(p: ModelParams, B: float, lam: float, EH0: float) -> float:
    """C_init2 = 4 max(E H_0, B/lambda) / min(gamma, 1), uniform in time."""
    return 4 * max(EH0, B / lam) / min(p.gamma, 1.0)


def radius_for_drift(B: float, lam: float, delta: float, p: ModelParams) -> float:
    """Radius outside which the Lyapunov drift dominates: sqrt(1280 (1+delta^2) B / (lambda min(gamma,1)))."""
    return math.sqrt(1280 * (1 + delta ** 2) * B / (lam * min(p.gamma, 1.0)))


def derive_lyapunov_constants(p: ModelParams, L_X: float, L_C: float, lam: Optional[float] = None,
                              a_tilde: float = 1.0, C_init_exp: float = 10.0) -> LyapunovConstants:
    lam = derive_lambda(L_X, L_C, lam)
    a = tilt_from(a_tilde, p)
    A = derive_A(p, L_X, L_C, lam)
    B = derive_B(p, L_X, L_C, lam)
    EH0 = initial_H_bound(p, a_tilde, C_init_exp)
    C_init2 = second_moment_bound(p, B, lam, EH0)
    branches = B_tilde_branches(p, L_X, L_C, lam, a, C_init2, B)
    for name, value in branches.items():
        logger.info(f"B_tilde branch {name}: {value:.6g}")
    k = LyapunovConstants.coefficients(p.gamma)
    logger.debug(f"lambda={lam:.6g} A={A:.6g} B={B:.6g} a={a:.6g} C_init2={C_init2:.6g}")
    return LyapunovConstants(
        lam=lam, B=B, B_tilde=max(0.0, max(branches.values())), a=a,
        alpha_X=k["alpha_X"], beta_X=k["beta_X"], alpha_C=k["alpha_C"], beta_C=k["beta_C"],
        L_X=L_X, L_C=L_C, A=A, C_init2=C_init2, EH0=EH0, B_tilde_branches=branches,
    )


def generator_H(z: State, proxy, kx: Kernel, kc: Kernel, p: ModelParams) -> float:
    """Generator of the limit dynamics (law replaced by the proxy) applied to H at z."""
    if not isinstance(z, State):
        z = State(*z)
    dx, dc = limit_drift(z, proxy, kx, kc, p)
    grad_x = p.gamma * z.x + p.beta
    grad_c = z.c + p.alpha
    return grad_x * dx + grad_c * dc + p.sigma_x ** 2 * p.gamma / 2 + p.sigma_c ** 2 / 2


def generator_H_bound(z: State, proxy, consts: LyapunovConstants, p: ModelParams) -> float:
    """B + (a_X L_X + b_X L_C)((E|X|)^2 - x^2) + (a_C L_X + b_C L_C)((E|C|)^2 - c^2) - lambda H."""
    if not isinstance(z, State):
        z = State(*z)
    cloud = as_states(proxy)
    ex = float(np.mean(np.abs(cloud[:, 0])))
    ec = float(np.mean(np.abs(cloud[:, 1])))
    wx = consts.alpha_X * consts.L_X + consts.beta_X * consts.L_C
    wc = consts.alpha_C * consts.L_X + consts.beta_C * consts.L_C
    return (consts.B + wx * (ex ** 2 - z.x ** 2) + wc * (ec ** 2 - z.c ** 2)
            - consts.lam * H(z, p))


def _log_le(report: CheckReport, name: str, value: float, log_bound: float, detail: str = ""):
    # inclusive comparison of value against exp(log_bound), done in log space
    log_value = math.log(value) if value > 0 else -math.inf
    tol = 1e-12 * max(1.0, abs(log_bound)) if math.isfinite(log_bound) else 0.0
    slack = log_bound - log_value
    report.add(name, log_value <= log_bound + tol, slack, log_space=True, detail=detail)


def check_kernel_admissibility(p: ModelParams, L_X: float, L_C: float, ledger) -> CheckReport:
    """Every smallness condition on the kernels that the uniform-in-time regime needs."""
    consts = ledger.lyapunov
    lam, a = consts.lam, consts.a
    report = CheckReport("kernel admissibility")

    log_bounds = [
        math.log(lam) - math.log(128) - ledger.log_Cz,
        math.log(lam) + math.log(a) - math.log(512) - ledger.log_epsilon - ledger.log_Cz,
        ledger.log_c - math.log(2) - ledger.log_C1,
    ]
    labels = ["lambda/(128 Cz)", "lambda a/(512 eps Cz)", "c/(2 C1)"]
    log_delta = math.log(ledger.delta)
    for label, bound in zip(labels, log_bounds):
        _log_le(report, f"L_X <= {label}", L_X, bound)
    for label, bound in zip(labels, log_bounds):
        _log_le(report, f"L_C <= {label} / delta", L_C, bound - log_delta)

    wx = consts.alpha_X * L_X + consts.beta_X * L_C
    report.add("alpha_X L_X + beta_X L_C <= gamma lambda/128", wx <= p.gamma * lam / 128,
               p.gamma * lam / 128 - wx)
    wc = consts.alpha_C * L_X + consts.beta_C * L_C
    report.add("alpha_C L_X + beta_C L_C <= lambda/128", wc <= lam / 128, lam / 128 - wc)
    lhs = _KX_WEIGHT * L_X + _KC_WEIGHT * L_C
    report.add("L_X/8 + L_C(2+1/8) < 1 - lambda/2", lhs < 1 - lam / 2, 1 - lam / 2 - lhs)
    return report
