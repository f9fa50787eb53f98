"""Concave distance f, Lyapunov weights G, the semimetric rho and the coupling ledger."""

import math
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.integrate
from scipy.interpolate import PchipInterpolator
from scipy.special import dawsn, erf, logsumexp

import config
from app.api.lyapunov import H, H_tilde_log, derive_lyapunov_constants, radius_for_drift
from app.logger import default_logger as logger
from app.models.ensemble import Ensemble
from app.models.errors import DerivationError, DomainError
from app.models.ledger import CouplingLedger
from app.models.params import ModelParams, State, as_states
from app.models.records import CheckReport

VARIANTS = ["standard", "appendix_b"]

# beyond sqrt(CUT_EXPONENT / q), erf(sqrt(q) r) equals 1 to double precision
CUT_EXPONENT = 40.0
INNER_NODES = 4000
OUTER_NODES = 4000


def r_dist(z, zbar, delta: float):
    """|x - xbar| + delta |c - cbar|; float for States, array for (n, 2) inputs."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    a, b = as_states(z), as_states(zbar)
    out = np.abs(a[:, 0] - b[:, 0]) + delta * np.abs(a[:, 1] - b[:, 1])
    return float(out[0]) if isinstance(z, State) else out


def r_appendix_b(z, zbar, delta: float):
    """delta |x - xbar| + |2(x - xbar) - (c - cbar)|, the distance used when only C is noisy."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    a, b = as_states(z), as_states(zbar)
    dx = a[:, 0] - b[:, 0]
    dc = a[:, 1] - b[:, 1]
    out = delta * np.abs(dx) + np.abs(2 * dx - dc)
    return float(out[0]) if isinstance(z, State) else out


def pair_distance(z, zbar, ledger: CouplingLedger):
    """Distance matching the ledger variant."""
    if ledger.variant == "appendix_b":
        return r_appendix_b(z, zbar, ledger.delta)
    return r_dist(z, zbar, ledger.delta)


class ConcaveProfile:
    """phi, Phi, g, f' and f on [0, R] for phi(r) = exp(-q r^2) and curvature weight kappa.

    With J(r) = exp(-q r^2) int_0^r Phi(s) exp(q s^2) ds and K = int J:
        g = 1 - kappa exp(q r^2) J,   f' = phi - kappa J,   f = Phi - kappa K.
    J solves J' = Phi - 2 q r J. Past the cut radius Phi is constant and J has a closed form
    through Dawson's integral, so nothing overflows however large q R^2 gets.
    """

    def __init__(self, q: float, log_kappa: float, R: float):
        if q <= 0 or R <= 0:
            raise DomainError("profile needs q > 0 and R > 0")
        self.q = q
        self.log_kappa = log_kappa
        self.R = R
        self.sqrt_q = math.sqrt(q)
        self.Phi_inf = math.sqrt(math.pi) / (2 * self.sqrt_q)
        self.r_cut = min(R, math.sqrt(CUT_EXPONENT / q))
        self._build()

    def _build(self):
        q = self.q
        inner = np.linspace(0.0, self.r_cut, INNER_NODES)

        def rhs(r, y):
            return [self.Phi(r) - 2 * q * r * y[0], y[0]]

        scale = self.Phi_inf * max(self.r_cut, 1.0)
        sol = scipy.integrate.solve_ivp(rhs, (0.0, self.r_cut), [0.0, 0.0], method="Radau",
                                        t_eval=inner, rtol=1e-11, atol=1e-15 * scale)
        if not sol.success:
            raise DerivationError("f", f"profile integration failed: {sol.message}")
        self._J_cut = float(sol.y[0, -1])
        self._J_inner = PchipInterpolator(inner, sol.y[0])
        nodes = [inner]
        K_values = [sol.y[1]]

        if self.R > self.r_cut:
            outer = np.geomspace(self.r_cut, self.R, OUTER_NODES)
            outer[-1] = self.R
            K_sol = scipy.integrate.solve_ivp(lambda r, y: [self._J_outer(r)], (self.r_cut, self.R),
                                              [float(sol.y[1, -1])], method="DOP853", t_eval=outer,
                                              rtol=1e-11, atol=1e-15 * scale)
            if not K_sol.success:
                raise DerivationError("f", f"profile integration failed: {K_sol.message}")
            nodes.append(outer[1:])
            K_values.append(K_sol.y[0, 1:])

        self.nodes = np.concatenate(nodes)
        self._K = PchipInterpolator(self.nodes, np.concatenate(K_values))

    def _J_outer(self, r):
        q, sq = self.q, self.sqrt_q
        decay = np.exp(-q * (np.square(r) - self.r_cut ** 2))
        return decay * self._J_cut + (self.Phi_inf / sq) * (dawsn(sq * r) - decay * dawsn(sq * self.r_cut))

    def _clip(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise DomainError("distances must be non-negative")
        return np.minimum(r, self.R)

    def phi(self, r):
        return np.exp(-self.q * np.square(np.asarray(r, dtype=float)))

    def Phi(self, r):
        return self.Phi_inf * erf(self.sqrt_q * np.asarray(r, dtype=float))

    def J(self, r):
        r = self._clip(r)
        return np.where(r <= self.r_cut, self._J_inner(np.minimum(r, self.r_cut)), self._J_outer(r))

    def _log_tilt(self, r):
        # log(kappa exp(q r^2) J(r)); -inf at r = 0
        r = self._clip(r)
        with np.errstate(divide="ignore"):
            return self.log_kappa + self.q * np.square(r) + np.log(self.J(r))

    def g(self, r):
        with np.errstate(over="ignore"):
            return -np.expm1(self._log_tilt(r))

    def log_g(self, r):
        t = self._log_tilt(r)
        with np.errstate(invalid="ignore", over="ignore"):
            return np.where(t < 0, np.log(-np.expm1(np.minimum(t, 0.0))), -np.inf)

    def log_fprime(self, r):
        """log f'(r) for r in [0, R] (the left derivative at R)."""
        r = self._clip(r)
        return -self.q * np.square(r) + self.log_g(r)

    def fprime(self, r):
        r_in = np.asarray(r, dtype=float)
        return np.where(r_in > self.R, 0.0, np.exp(self.log_fprime(r_in)))

    def f(self, r):
        r = self._clip(r)
        kappa = math.exp(self.log_kappa) if self.log_kappa < 700 else math.inf
        return self.Phi(r) - kappa * self._K(r)

    def log_f(self, r):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.f(r))


@lru_cache(maxsize=32)
def _profile(q: float, log_kappa: float, R: float) -> ConcaveProfile:
    return ConcaveProfile(q, log_kappa, R)


def profile_for(ledger: CouplingLedger) -> ConcaveProfile:
    """Memoized profile of a ledger (read-only after construction)."""
    return _profile(ledger.q, ledger.log_kappa, ledger.R)


def _scalar(value, r):
    return float(value) if np.ndim(r) == 0 else value


def phi(r, ledger: CouplingLedger):
    return _scalar(profile_for(ledger).phi(r), r)


def Phi(r, ledger: CouplingLedger):
    return _scalar(profile_for(ledger).Phi(r), r)


def g(r, ledger: CouplingLedger):
    return _scalar(profile_for(ledger).g(r), r)


def f(r, ledger: CouplingLedger):
    """Concave transform of the distance; constant on [R, inf)."""
    return _scalar(profile_for(ledger).f(r), r)


def fprime(r, ledger: CouplingLedger):
    return _scalar(profile_for(ledger).fprime(r), r)


def _curvature_constants(p: ModelParams, a: float, delta: float):
    g_max = max(p.gamma, 1.0)
    root = math.sqrt(2 * g_max)
    shift = p.beta + p.alpha / delta
    Cf1 = 16 * ((1 / a ** 2) * (p.gamma + a * shift * root) * math.expm1(a ** 2 / 2)
                + root * (math.sqrt(p.gamma) + 1 / delta) * (math.e - 2))
    Cf2 = 4 * (p.gamma + (a * shift + 2 * a ** 2 * (math.sqrt(p.gamma) + 1 / delta)) * root)
    return Cf1, Cf2


def derive_ledger(p: ModelParams, L_X: float, L_C: float, L_X_max: float = config.L_X_MAX,
                  L_C_max: float = config.L_C_MAX, eta: float = config.DEFAULT_ETA,
                  delta_tilde: float = config.DEFAULT_DELTA_TILDE, a_tilde: float = config.DEFAULT_A_TILDE,
                  C_init_exp: float = config.DEFAULT_C_INIT_EXP, xi: Optional[float] = None,
                  lam: Optional[float] = None, variant: str = "standard") -> CouplingLedger:
    """Derive every constant of the coupling in order: rates, delta, radii, curvature, c, epsilon, controls."""
    if variant not in VARIANTS:
        raise DomainError(f"variant must be one of: {', '.join(VARIANTS)}")
    if not eta > 4:
        raise DerivationError("eta", f"must exceed 4, got {eta}")
    if not delta_tilde > 0:
        raise DerivationError("delta_tilde", f"must be positive, got {delta_tilde}")
    if not 0 <= L_X <= L_X_max:
        raise DerivationError("L_X", f"must lie in [0, L_X_max={L_X_max}], got {L_X}")
    if not 0 <= L_C <= L_C_max < 1:
        raise DerivationError("L_C", f"must lie in [0, L_C_max={L_C_max}] with L_C_max < 1, got {L_C}")
    if variant == "standard":
        sigma = p.sigma_x
        if sigma <= 0:
            raise DerivationError("sigma_x", "must be positive (use the appendix_b variant when only C is noisy)")
    else:
        sigma = p.sigma_c
        if p.sigma_x != 0 or sigma <= 0:
            raise DerivationError("sigma_c", "the appendix_b variant needs sigma_x = 0 and sigma_c > 0")

    lya = derive_lyapunov_constants(p, L_X, L_C, lam, a_tilde, C_init_exp)
    lam, a, B_tilde = lya.lam, lya.a, lya.B_tilde
    if not B_tilde > 0:
        raise DerivationError("B_tilde", f"must be positive, got {B_tilde}")

    delta = (1 + delta_tilde) * (1 + L_X_max) / (1 - L_C_max)
    if variant == "appendix_b":
        delta = max(delta, 2 * (1 + delta_tilde))
    R0 = radius_for_drift(B_tilde, lam, 0.0, p)
    R = radius_for_drift(B_tilde, lam, delta, p)

    Cf1, Cf2 = _curvature_constants(p, a, delta)
    if Cf1 <= 0 or Cf2 <= 0:
        raise DerivationError("C_f", f"curvature constants must be positive, got C_f1={Cf1}, C_f2={Cf2}")

    sigma2 = sigma ** 2
    base_max = 1 + delta * p.gamma + L_X_max + delta * L_C_max
    # gap and base rate taken at L_max, not the actual L_X, L_C: c stays valid for every kernel pair up to L_max
    gap = 1 - L_C_max - (1 + L_X_max) / delta
    if gap <= 0:
        raise DerivationError("delta", f"1 - L_C_max - (1 + L_X_max)/delta = {gap} is not positive")
    log_c_branches = {
        "B_tilde": math.log(2 * B_tilde / eta),
        "lambda": math.log(lam / 160 * (eta - 4) / eta),
        "exponential": (-math.log(2 * (1 + eta))
                        + math.log(min(sigma / (math.sqrt(math.pi) * R), gap))
                        - (base_max + (Cf1 + Cf2) * sigma2) * R ** 2 / (4 * sigma2)),
    }
    c_branch = min(log_c_branches, key=log_c_branches.get)
    log_c = log_c_branches[c_branch]
    logger.info(f"c binds on the {c_branch} branch (log c = {log_c:.6g})")

    log_eps = math.log(eta) + log_c - math.log(2 * B_tilde)
    eps = math.exp(log_eps)
    q = (1 + delta * p.gamma + L_X + delta * L_C + (eps * Cf1 + Cf2) * sigma2) / (4 * sigma2)
    log_phi_min = -(base_max + (eps * Cf1 + Cf2) * sigma2) * R ** 2 / (4 * sigma2)

    log_weight = math.log(16 * (1 + delta ** 2) / min(p.gamma, 1.0)) - log_eps
    log_C1 = -math.log(min(delta, 1.0)) + math.log(2) - log_phi_min + max(log_weight, 0.0)
    log_C2 = -math.log(min(delta ** 2, 1.0)) + math.log(2) - log_phi_min + max(log_weight, 0.0)
    log_Cz = (math.log(2) - log_phi_min
              + max(0.0, math.log(4) - log_eps + math.log(max(math.sqrt(1 / p.gamma), 1.0))))

    xi = config.DEFAULT_XI_FRACTION * R if xi is None else float(xi)
    if xi <= 0:
        raise DerivationError("xi", f"must be positive, got {xi}")

    ledger = CouplingLedger(
        params=p, lyapunov=lya, variant=variant, noise=sigma,
        L_X=L_X, L_C=L_C, L_X_max=L_X_max, L_C_max=L_C_max, eta=eta, delta_tilde=delta_tilde,
        a_tilde=a_tilde, C_init_exp=C_init_exp, delta=delta, R0=R0, R=R, Cf1=Cf1, Cf2=Cf2,
        log_c=log_c, c_branch=c_branch, log_c_branches=log_c_branches, log_epsilon=log_eps,
        log_phi_min=log_phi_min, log_C1=log_C1, log_C2=log_C2, log_Cz=log_Cz, q=q, xi=xi,
    )
    logger.debug(f"ledger: delta={delta:.6g} R={R:.6g} q={q:.6g} log_C1={log_C1:.6g}")
    return ledger


def ledger_grid(ledger: CouplingLedger, points: int = config.LEDGER_GRID_POINTS) -> np.ndarray:
    """points uniform nodes on (0, R] merged with the profile's inner nodes."""
    uniform = np.linspace(ledger.R / points, ledger.R, points)
    inner = profile_for(ledger).nodes
    return np.unique(np.concatenate([uniform, inner[inner > 0]]))


def verify_ledger(ledger: CouplingLedger, points: int = config.LEDGER_GRID_POINTS) -> CheckReport:
    """Numerical check of every property the contraction argument needs from the ledger."""
    prof = profile_for(ledger)
    lya = ledger.lyapunov
    R = ledger.R
    grid = ledger_grid(ledger, points)
    report = CheckReport("ledger")

    log_fp = prof.log_fprime(grid)
    f_vals = prof.f(grid)
    log_f = prof.log_f(grid)
    log_fp_R = float(prof.log_fprime(R))
    f_R = float(prof.f(R))

    report.add("f'(0+) = 1", float(prof.fprime(0.0)) == 1.0, 1.0 - abs(1.0 - float(prof.fprime(0.0))))
    h = 1e-6
    fd = float(prof.f(h) - prof.f(0.0)) / h
    report.add("forward difference of f at 0 within 1e-4 of 1", abs(fd - 1.0) <= 1e-4, 1e-4 - abs(fd - 1.0))

    k = int(np.argmin(f_vals))
    report.add("f >= 0", f_vals[k] >= 0, float(f_vals[k]), where=float(grid[k]))

    k = int(np.argmin(log_fp))
    report.add("f nondecreasing (f' > 0)", np.all(np.isfinite(log_fp)), float(log_fp[k]), where=float(grid[k]),
               log_space=True)
    steps = np.diff(log_fp)
    k = int(np.argmax(steps)) if steps.size else 0
    worst = float(steps[k]) if steps.size else 0.0
    report.add("f concave (f' nonincreasing)", worst <= 1e-9, -worst, where=float(grid[k]), log_space=True)
    report.add("f'(R-) > 0", math.isfinite(log_fp_R), log_fp_R, where=R, log_space=True)

    # min(s, R) f'(R) <= f(s) <= min(s, f(R))
    lower = np.log(np.minimum(grid, R)) + log_fp_R - log_f
    k = int(np.argmax(lower))
    report.add("min(s,R) f'(R) <= f(s)", lower[k] <= 1e-9, -float(lower[k]), where=float(grid[k]), log_space=True)
    upper = f_vals - np.minimum(grid, f_R)
    k = int(np.argmax(upper))
    report.add("f(s) <= min(s, f(R))", upper[k] <= 1e-12 * max(f_R, 1.0), -float(upper[k]), where=float(grid[k]))

    log_phi_R = -ledger.q * R ** 2
    report.add("phi >= phi_min on [0,R]", log_phi_R >= ledger.log_phi_min - 1e-12 * abs(ledger.log_phi_min),
               log_phi_R - ledger.log_phi_min, where=R, log_space=True)

    log_g = prof.log_g(grid)
    k = int(np.argmin(log_g))
    report.add("g >= 1/2 on [0,R]", log_g[k] >= -math.log(2), float(log_g[k]) + math.log(2),
               where=float(grid[k]), log_space=True)
    tail = math.log(2) + log_fp_R + ledger.q * R ** 2
    report.add("2 f'(R) >= exp(-q R^2)", tail >= 0, tail, where=R, log_space=True)

    gap = 1 - ledger.L_C - (1 + ledger.L_X) / ledger.delta
    ratio = log_fp + np.log(grid) - log_f
    k = int(np.argmin(ratio))
    lhs = math.log(2) + ledger.log_c + math.log1p(ledger.eta)
    rhs = (math.log(gap) if gap > 0 else -math.inf) + float(ratio[k])
    report.add("2c + 4 eps B_tilde <= (1 - L_C - (1+L_X)/delta) min f'(r) r / f(r)", lhs <= rhs, rhs - lhs,
               where=float(grid[k]), log_space=True)

    log_u = math.log(80) + ledger.log_epsilon + math.log(lya.B_tilde) - math.log(lya.lam)
    log_bound = math.log(lya.lam / 160) + log_u - math.log1p(math.exp(min(log_u, 700.0)))
    report.add("c <= (lambda/160) u/(1+u), u = 80 eps B_tilde/lambda", ledger.log_c <= log_bound + 1e-12,
               log_bound - ledger.log_c, log_space=True)

    order = (1 + ledger.L_X) / (1 - ledger.L_C)
    report.add("delta > (1+L_X)/(1-L_C)", ledger.delta > order, ledger.delta - order)
    if ledger.variant == "appendix_b":
        report.add("delta > 2", ledger.delta > 2, ledger.delta - 2)
    report.add("epsilon <= 1", ledger.log_epsilon <= 0, -ledger.log_epsilon, log_space=True)
    expected = math.log(ledger.eta) + ledger.log_c - math.log(2 * lya.B_tilde)
    drift = abs(ledger.log_epsilon - expected)
    report.add("epsilon = eta c/(2 B_tilde)", drift <= 1e-9 * max(1.0, abs(expected)), -drift, log_space=True)

    level = "passes" if report.passed else "fails"
    logger.info(f"ledger verification {level} ({len(report.failures)} of {len(report.checks)} checks failing)")
    return report


def _weights_log_terms(states: np.ndarray, ledger: CouplingLedger) -> np.ndarray:
    return ledger.log_epsilon + H_tilde_log(states, ledger.lyapunov.a, ledger.params)


def G_weights(zs: np.ndarray, zbars: np.ndarray, ledger: CouplingLedger) -> np.ndarray:
    if zs.shape != zbars.shape:
        raise DomainError(f"ensembles differ in size: {zs.shape[0]} vs {zbars.shape[0]}")
    n = zs.shape[0]
    own = _weights_log_terms(zs, ledger)
    other = _weights_log_terms(zbars, ledger)
    mean_own = logsumexp(own) - math.log(n)
    mean_other = logsumexp(other) - math.log(n)
    with np.errstate(over="ignore"):
        return 1.0 + np.exp(own) + np.exp(other) + math.exp(min(mean_own, 709.0)) + math.exp(min(mean_other, 709.0))


def _states_of(ens) -> np.ndarray:
    return ens.states if isinstance(ens, Ensemble) else as_states(ens)


def G_weight(i: int, ens, ensbar, ledger: CouplingLedger) -> float:
    """1 + eps H~(z_i) + eps H~(zbar_i) + (eps/N) sum H~(z_j) + (eps/N) sum H~(zbar_j)."""
    zs, zbars = _states_of(ens), _states_of(ensbar)
    weights = G_weights(zs, zbars, ledger)
    if not 0 <= i < zs.shape[0]:
        raise IndexError(f"particle index {i} out of range for N={zs.shape[0]}")
    return float(weights[i])


def rho(ens, ensbar, ledger: CouplingLedger) -> float:
    """(1/N) sum_i f(r(z_i, zbar_i)) G_i."""
    zs, zbars = _states_of(ens), _states_of(ensbar)
    weights = G_weights(zs, zbars, ledger)
    dist = pair_distance(zs, zbars, ledger)
    return float(np.mean(profile_for(ledger).f(dist) * weights))


DISTANCE_CONTROL_NAMES = (
    "|z - zbar|_1 <= C1 f(r)(1 + eps H~(z) + eps H~(zbar))",
    "|z - zbar|_2^2 <= C2 f(r)(1 + eps H~(z) + eps H~(zbar))",
    "|z - zbar|_1 <= Cz f(r)(1 + eps sqrt(H(z)) + eps sqrt(H(zbar)))",
)


def distance_control_slacks(zs, zbars, ledger: CouplingLedger) -> np.ndarray:
    """Log-space slacks (bound minus value) of the three distance controls, shape (3, n); +inf for equal pairs."""
    zs, zbars = as_states(zs), as_states(zbars)
    if zs.shape != zbars.shape:
        raise DomainError(f"ensembles differ in size: {zs.shape[0]} vs {zbars.shape[0]}")
    p, a, log_eps = ledger.params, ledger.lyapunov.a, ledger.log_epsilon
    diff = np.abs(zs - zbars)
    l1 = diff.sum(axis=1)
    l2sq = (diff ** 2).sum(axis=1)

    r = r_dist(zs, zbars, ledger.delta)
    log_f = profile_for(ledger).log_f(r)
    zeros = np.zeros(l1.shape)
    log_tilde = np.logaddexp.reduce([zeros, log_eps + H_tilde_log(zs, a, p), log_eps + H_tilde_log(zbars, a, p)])
    with np.errstate(divide="ignore"):
        log_sqrt = np.logaddexp.reduce([zeros, log_eps + 0.5 * np.log(H(zs, p)), log_eps + 0.5 * np.log(H(zbars, p))])
        log_l1 = np.log(l1)
        log_l2sq = np.log(l2sq)

    slacks = np.stack([
        ledger.log_C1 + log_tilde + log_f - log_l1,
        ledger.log_C2 + log_tilde + log_f - log_l2sq,
        ledger.log_Cz + log_sqrt + log_f - log_l1,
    ])
    slacks[:, l1 == 0] = np.inf
    return slacks


def check_distance_control(z: State, zbar: State, ledger: CouplingLedger) -> CheckReport:
    """The L1 and squared L2 distances of a pair are controlled by f(r) times Lyapunov weights."""
    if not isinstance(z, State):
        z = State(*z)
    if not isinstance(zbar, State):
        zbar = State(*zbar)
    report = CheckReport("distance control")
    r = r_dist(z, zbar, ledger.delta)
    slacks = distance_control_slacks(z, zbar, ledger)[:, 0]
    for name, slack in zip(DISTANCE_CONTROL_NAMES, slacks):
        if not math.isfinite(slack):
            report.add(name, True, 0.0, where=r, log_space=True)
            continue
        report.add(name, slack >= -1e-12, float(slack), where=r, log_space=True)
    return report
