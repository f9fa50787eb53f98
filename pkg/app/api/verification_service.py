"""Verification service: runs one acceptance criterion end to end and returns its verdict."""

import filecmp
import itertools
import math
import os
import tempfile
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.spatial.distance import cdist

import config
from app.api import distance
from app.api.lyapunov import (H, derive_lyapunov_constants, lower_bound_slacks, pair_moment_slack,
                              tilde_sandwich_slacks)
from app.api.metrics import (coupled_w1_bound, expectation_series, fit_exponential_envelope, fit_scaling,
                             nonuniform_constants, replica_seed, wasserstein_exact)
from app.api.simulation_service import SimulationService
from app.logger import default_logger as logger
from app.models.errors import ConfigError
from app.models.params import ModelParams
from app.models.records import SeriesEstimate
from app.storage.run_store import RunStore


def make_verdict(criterion: str, passed: bool, statistic, tolerance, **details) -> Dict[str, object]:
    return {
        "criterion": criterion,
        "pass": bool(passed),
        "statistic": statistic,
        "tolerance": tolerance,
        "details": details,
    }


def mixed_states(rng: np.random.Generator, n: int, scale: float = 2.0) -> np.ndarray:
    """n states, half Gaussian and half Student-t with 3 degrees of freedom, shuffled."""
    half = n // 2
    gauss = scale * rng.standard_normal((half, 2))
    heavy = scale * rng.standard_t(3, size=(n - half, 2))
    out = np.vstack([gauss, heavy])
    rng.shuffle(out)
    return out


def _stderr(est: SeriesEstimate) -> np.ndarray:
    return est.stderr if est.errors_available else np.zeros_like(est.mean)


def nonincreasing_excess(est: SeriesEstimate, mask: np.ndarray, k: float = 3.0) -> float:
    """max over sampled s < t of mean(t) - mean(s) - k sqrt(se(s)^2 + se(t)^2); <= 0 means nonincreasing."""
    mean = est.mean[mask]
    se = _stderr(est)[mask]
    worst = -math.inf
    for i in range(mean.size - 1):
        later = slice(i + 1, None)
        gap = mean[later] - mean[i] - k * np.sqrt(se[i] ** 2 + se[later] ** 2)
        worst = max(worst, float(np.max(gap)))
    return worst if math.isfinite(worst) else 0.0


class VerificationService:
    """Service class for the acceptance criteria of a RunConfig."""

    def __init__(self, run_config, threads: Optional[int] = None):
        self.run_config = run_config
        self.simulation = SimulationService(run_config, threads)
        self.params = self.simulation.params
        self._checks: Dict[str, Callable[[], Dict[str, object]]] = {
            "lemmas": self.check_lemmas,
            "ledger": self.check_ledger,
            "lyapunov-bound": self.check_lyapunov_bound,
            "scaling-law": self.check_scaling_law,
            "nonuniform": self.check_nonuniform,
            "appendix-b": self.check_appendix_b,
            "ot-oracle": self.check_ot_oracle,
            "determinism": self.check_determinism,
        }

    def run(self, criterion: str, store: Optional[RunStore] = None) -> Dict[str, object]:
        """Run one criterion; the verdict is written to the store when one is given."""
        if criterion not in self._checks:
            raise ConfigError(f"unknown criterion '{criterion}' (choose from: {', '.join(config.CRITERIA)})",
                              field="criterion")
        logger.info(f"Verifying {criterion}")
        verdict = self._checks[criterion]()
        if verdict["pass"]:
            logger.info(f"{criterion}: PASS (statistic {verdict['statistic']}, tolerance {verdict['tolerance']})")
        else:
            logger.warning(f"{criterion}: FAIL (statistic {verdict['statistic']}, tolerance {verdict['tolerance']})")
        if store is not None:
            store.write_verdict(criterion, verdict)
        return verdict

    def _verify_plan(self):
        cfg = self.run_config
        steps = int(round(cfg.verify_horizon / cfg.verify_dt))
        stride = max(1, steps // cfg.verify_samples)
        return cfg.verify_dt, steps, stride

    def _replica_records(self, runner: Callable[[int], List[dict]], replicas: int) -> List[List[dict]]:
        return [runner(replica_seed(self.run_config.seed, k)) for k in range(replicas)]

    def check_lemmas(self) -> Dict[str, object]:
        cfg, p = self.run_config, self.params
        ledger = self.simulation.ledger()
        rng = np.random.default_rng(cfg.seed)
        n = config.LEMMA_SAMPLES
        z = mixed_states(rng, n)
        far = mixed_states(rng, n)
        # every other pair is a small perturbation so both r <= 1 and r > 1 are covered
        near = z + 1e-2 / ledger.delta * rng.standard_normal((n, 2))
        zbar = np.where((np.arange(n) % 2 == 0)[:, None], near, far)
        r = distance.r_dist(z, zbar, ledger.delta)
        scale = 1.0 + H(z, p) + H(zbar, p)

        slacks = {}
        slacks.update(lower_bound_slacks(z, p))
        slacks["(|dx| + delta |dc|)^2 <= 16(1+delta^2)/min(gamma,1) (H(z) + H(zbar))"] = \
            pair_moment_slack(z, zbar, p, ledger.delta)
        slacks.update(tilde_sandwich_slacks(z, ledger.lyapunov.a, p))
        normalized = {name: values / scale for name, values in slacks.items()}
        # distance controls are compared in log space already
        for name, values in zip(distance.DISTANCE_CONTROL_NAMES, distance.distance_control_slacks(z, zbar, ledger)):
            normalized[name] = values

        tolerance = -1e-9
        violations = {name: int(np.sum(values < tolerance)) for name, values in normalized.items()}
        worst = min(float(np.min(values)) for values in normalized.values())
        return make_verdict(
            "lemmas", sum(violations.values()) == 0, worst, tolerance,
            samples=n, violations=violations,
            near_pairs=int(np.sum(r <= 1)), far_pairs=int(np.sum(r > 1)),
        )

    def _random_ledger_inputs(self, rng: np.random.Generator):
        cfg = self.run_config
        p = ModelParams(rng.uniform(0.0, 1.5), rng.uniform(0.0, 1.5), rng.uniform(0.5, 2.0),
                        rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0))
        L_X = rng.uniform(0.0, min(1.0, cfg.l_x_max))
        L_C = rng.uniform(0.0, min(0.05, cfg.l_c_max))
        return p, L_X, L_C

    def check_ledger(self) -> Dict[str, object]:
        cfg = self.run_config
        reports = {"default": distance.verify_ledger(self.simulation.ledger())}
        rng = np.random.default_rng(cfg.seed)
        for k in range(config.LEDGER_RANDOM_CONFIGS):
            p, L_X, L_C = self._random_ledger_inputs(rng)
            ledger = distance.derive_ledger(p, L_X, L_C, L_X_max=cfg.l_x_max, L_C_max=cfg.l_c_max,
                                            eta=cfg.eta, delta_tilde=cfg.delta_tilde, a_tilde=cfg.a_tilde,
                                            C_init_exp=cfg.c_init_exp)
            reports[f"random_{k}"] = distance.verify_ledger(ledger)
        failures = {name: [c.name for c in report.failures] for name, report in reports.items() if not report.passed}
        failed = sum(len(names) for names in failures.values())
        return make_verdict("ledger", failed == 0, failed, 0, configs=len(reports), failures=failures)

    def check_lyapunov_bound(self) -> Dict[str, object]:
        cfg, p = self.run_config, self.params
        steps = cfg.n_steps
        stride = max(1, steps // cfg.verify_samples)
        records = self._replica_records(
            lambda seed: self.simulation.simulate(seed, cfg.n_particles, cfg.dt, steps, stride), cfg.verify_replicas)
        est = expectation_series(records, "mean_H")
        L_X, L_C = self.simulation.L_X, self.simulation.L_C
        lya = derive_lyapunov_constants(p, L_X, L_C, cfg.lambda_override, cfg.a_tilde, cfg.c_init_exp)
        level = max(float(est.mean[0]), lya.B / lya.lam)
        excess = est.mean - (level + 3 * _stderr(est))
        worst = int(np.argmax(excess))
        return make_verdict(
            "lyapunov-bound", bool(np.all(excess <= 0)), float(excess[worst]), 0.0,
            level=level, B=lya.B, lam=lya.lam, worst_time=float(est.t[worst]),
            replicas=est.replicas, samples=int(est.t.size),
        )

    def _coupled_scaling(self, criterion: str, coupling: str, observable: str) -> Dict[str, object]:
        """Time-averaged coupled distance against N, plus the nonincreasing check on the mean of rho."""
        cfg = self.run_config
        dt, steps, stride = self._verify_plan()
        m = cfg.verify_proxy_size
        sizes = cfg.verify_sizes()
        if m < max(sizes):
            raise ConfigError(f"must be at least the largest verify size {max(sizes)}", field="verify_proxy_size")
        levels, rho_excess = [], []
        for n in sizes:
            records = self._replica_records(
                lambda seed: self.simulation.couple(seed, n, m, coupling, dt, steps, stride), cfg.verify_replicas)
            series = expectation_series(records, observable)
            late = series.t >= config.VERIFY_TRANSIENT * cfg.verify_horizon
            levels.append(float(np.mean(series.mean[late])))
            rho_excess.append(nonincreasing_excess(expectation_series(records, "rho"), late))
            logger.info(f"{criterion}: N={n} time-averaged {observable} = {levels[-1]:.6g}")
        fit = fit_scaling(sizes, levels)
        lo, hi = config.SCALING_SLOPE
        bounded = max(rho_excess) <= 0
        passed = bounded and lo <= fit.slope <= hi and fit.r_squared >= config.SCALING_MIN_R2
        return make_verdict(
            criterion, passed, fit.slope, [lo, hi],
            sizes=sizes, levels=levels, fit=fit.to_dict(), min_r_squared=config.SCALING_MIN_R2,
            rho_nonincreasing_excess=rho_excess, coupling=coupling, observable=observable,
            xi_sweep=self._xi_sweep(coupling, observable, max(sizes), m),
        )

    def _xi_sweep(self, coupling: str, observable: str, n: int, m: int) -> Dict[str, object]:
        """Late-time level for each mollifier width; narrower widths should not do worse.

        Reported next to the scaling verdict without gating it: the improvement only
        holds in the limit of vanishing width.
        """
        cfg = self.run_config
        dt, steps, stride = self._verify_plan()
        levels, errors = [], []
        for fraction in config.XI_SWEEP:
            service = SimulationService(cfg.with_overrides(xi_fraction=fraction), self.simulation.threads)
            records = [service.couple(replica_seed(cfg.seed, k), n, m, coupling, dt, steps, stride)
                       for k in range(cfg.verify_replicas)]
            series = expectation_series(records, observable)
            late = series.t >= config.VERIFY_TRANSIENT * cfg.verify_horizon
            levels.append(float(np.mean(series.mean[late])))
            errors.append(float(np.mean(_stderr(series)[late])))
        monotone = all(levels[i + 1] <= levels[i] + 3 * math.hypot(errors[i], errors[i + 1])
                       for i in range(len(levels) - 1))
        if not monotone:
            logger.warning(f"{observable} does not improve as the mollifier width shrinks: {levels}")
        return {"fractions": list(config.XI_SWEEP), "size": n, "levels": levels, "stderr": errors,
                "monotone": monotone}

    def check_scaling_law(self) -> Dict[str, object]:
        return self._coupled_scaling("scaling-law", "reflection_x", "w1_bound")

    def check_appendix_b(self) -> Dict[str, object]:
        noisy_c = self.run_config.with_overrides(sigma_x=0.0, coupling="reflection_c")
        service = VerificationService(noisy_c, self.simulation.threads)
        return service._coupled_scaling("appendix-b", "reflection_c", "mean_r")

    def check_nonuniform(self) -> Dict[str, object]:
        cfg, p = self.run_config, self.params
        dt, steps, stride = self._verify_plan()
        sizes = sorted({min(cfg.verify_sizes()), max(cfg.verify_sizes())})
        m = max(cfg.verify_proxy_size, max(sizes))
        scaled = {}
        for n in sizes:
            records = self._replica_records(
                lambda seed: self.simulation.couple(seed, n, m, "synchronous", dt, steps, stride),
                cfg.verify_replicas)
            est = expectation_series(records, "mean_r")
            root = math.sqrt(n)
            scaled[n] = SeriesEstimate(est.t, est.mean * root, _stderr(est) * root, est.replicas)

        small, large = scaled[sizes[0]], scaled[sizes[-1]]
        gap = np.abs(small.mean - large.mean) - 3 * np.sqrt(small.stderr ** 2 + large.stderr ** 2)
        collapse = float(np.max(gap))

        lya = derive_lyapunov_constants(p, self.simulation.L_X, self.simulation.L_C, cfg.lambda_override,
                                        cfg.a_tilde, cfg.c_init_exp)
        constants = nonuniform_constants(p, self.simulation.L_X, self.simulation.L_C, lya.EH0, lya.B, lya.lam)
        rate_bound = 2 * constants["C2"]
        positive = (large.t > 0) & (large.mean > 0)
        if np.sum(positive) >= 3:
            envelope = fit_exponential_envelope(large.t[positive], large.mean[positive])
            slope = envelope.slope
        else:
            logger.info("nonuniform: pairs never separate, the envelope holds trivially")
            envelope, slope = None, 0.0
        return make_verdict(
            "nonuniform", collapse <= 0 and slope <= rate_bound, {"collapse": collapse, "slope": slope},
            {"collapse": 0.0, "slope": rate_bound},
            sizes=sizes, constants=constants, envelope=None if envelope is None else envelope.to_dict(),
        )

    def check_ot_oracle(self) -> Dict[str, object]:
        cfg = self.run_config
        dt, steps, _ = self._verify_plan()
        n = max(config.OT_SUBSAMPLE, max(cfg.verify_sizes()))
        m = max(cfg.verify_proxy_size, n)
        coupling = "synchronous" if cfg.coupling == "none" else cfg.coupling
        final = None
        for final in self.simulation.coupled_trajectory(cfg.seed, n, m, coupling, dt, steps, max(1, steps)):
            pass
        zs, zbars = final.system.states, final.paired_limit()
        ledger = self.simulation.ledger()

        rng = np.random.default_rng(cfg.seed)
        bound_violations, w2_violations, w2_checked = 0, 0, 0
        for _ in range(config.OT_INSTANCES):
            idx = rng.choice(n, size=config.OT_SUBSAMPLE, replace=False)
            sub, subbar = zs[idx], zbars[idx]
            exact = wasserstein_exact(sub, subbar, p=1)
            if coupled_w1_bound((sub, subbar), k=1) < exact - 1e-12 * (1 + exact):
                bound_violations += 1
            if ledger.variant == "standard":
                w2sq = wasserstein_exact(sub, subbar, p=2) ** 2
                rho = distance.rho(sub, subbar, ledger)
                if w2sq > 0:
                    w2_checked += 1
                    if math.log(w2sq) > ledger.log_C2 + math.log(rho) + 1e-9:
                        w2_violations += 1

        size = config.BRUTE_FORCE_SIZE
        perms = np.array(list(itertools.permutations(range(size))))
        rows = np.arange(size)
        worst_gap = 0.0
        for _ in range(config.BRUTE_FORCE_INSTANCES):
            a = rng.standard_normal((size, 2))
            b = rng.standard_normal((size, 2))
            brute = float(np.min(cdist(a, b, "cityblock")[rows, perms].sum(axis=1))) / size
            worst_gap = max(worst_gap, abs(wasserstein_exact(a, b, p=1) - brute) / max(brute, 1e-300))

        tolerance = 1e-12
        passed = bound_violations == 0 and w2_violations == 0 and worst_gap <= tolerance
        return make_verdict(
            "ot-oracle", passed, {"bound_violations": bound_violations, "brute_force_gap": worst_gap},
            {"bound_violations": 0, "brute_force_gap": tolerance},
            instances=config.OT_INSTANCES, subsample=config.OT_SUBSAMPLE,
            w2_checked=w2_checked, w2_violations=w2_violations, brute_force_instances=config.BRUTE_FORCE_INSTANCES,
        )

    def check_determinism(self) -> Dict[str, object]:
        cfg = self.run_config
        dt, steps, _ = self._verify_plan()
        steps = min(steps, cfg.verify_samples)
        # more rows than one chunk, so the chunked reduction is exercised
        n = config.PAIRWISE_CHUNK + 1
        m = max(cfg.verify_proxy_size, n)
        names = []
        with tempfile.TemporaryDirectory() as tmp:
            dirs = []
            for threads in config.DETERMINISM_THREADS:
                service = SimulationService(cfg, threads)
                out = os.path.join(tmp, f"threads_{threads}")
                with RunStore(out) as store:
                    names = [RunStore.series_name("system")]
                    store.write_series(names[0], service.simulate(cfg.seed, n, dt, steps, 1))
                    if cfg.coupling != "none":
                        names.append(RunStore.series_name("coupled"))
                        store.write_series(names[1], service.couple(cfg.seed, n, m, cfg.coupling, dt, steps, 1))
                dirs.append(out)
            mismatched = [name for name in names
                          if not filecmp.cmp(os.path.join(dirs[0], name), os.path.join(dirs[1], name), shallow=False)]
        return make_verdict(
            "determinism", not mismatched, len(mismatched), 0,
            threads=list(config.DETERMINISM_THREADS), files=names, mismatched=mismatched, particles=n, steps=steps,
        )


def verify(run_config, criterion: str, store: Optional[RunStore] = None,
           threads: Optional[int] = None) -> Dict[str, object]:
    return VerificationService(run_config, threads).run(criterion, store)
