"""Simulation service: runs the particle system or the coupled pairs and samples observables."""

import dataclasses
import math
import os
from typing import Dict, Iterator, List, Optional

import numpy as np
from scipy.special import logsumexp

import config
from app.api import distance
from app.api.integrator import check_coupling_noise, step_coupled, step_particles, switching_argument
from app.api.lyapunov import H, H_tilde_log, tilt_from
from app.api.metrics import coupled_w1_bound, replica_seed, weighted_mean_distance
from app.api.noise import initial_ensemble, mollifiers
from app.logger import default_logger as logger
from app.models.ensemble import CoupledEnsemble, Ensemble
from app.models.errors import ConfigError
from app.models.ledger import CouplingLedger
from app.storage.run_store import RunStore


def resolve_threads(requested: Optional[int] = None, fallback: int = 1) -> int:
    """Explicit request, else the FHN_THREADS environment variable, else the fallback."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(config.THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning(f"ignoring {config.THREADS_ENV}={env!r}: not an integer")
    return max(1, int(fallback))


class SimulationService:
    """Service class for simulation runs described by a RunConfig."""

    def __init__(self, run_config, threads: Optional[int] = None):
        """
        Initialize the service.

        Args:
            run_config: validated RunConfig
            threads: worker threads for the pairwise sums (results do not depend on it)
        """
        self.run_config = run_config
        self.params = run_config.model_params()
        self.kx, self.kc = run_config.kernels()
        self.L_X, self.L_C = run_config.lipschitz_constants()
        self.threads = resolve_threads(threads, run_config.threads)
        self._ledger: Optional[CouplingLedger] = None

    def ledger_variant(self) -> str:
        if self.run_config.coupling == "reflection_c" or self.params.sigma_x == 0:
            return "appendix_b"
        return "standard"

    def ledger(self) -> CouplingLedger:
        """Coupling ledger of this configuration (derived once)."""
        if self._ledger is None:
            cfg = self.run_config
            ledger = distance.derive_ledger(
                self.params, self.L_X, self.L_C, L_X_max=cfg.l_x_max, L_C_max=cfg.l_c_max, eta=cfg.eta,
                delta_tilde=cfg.delta_tilde, a_tilde=cfg.a_tilde, C_init_exp=cfg.c_init_exp,
                lam=cfg.lambda_override, variant=self.ledger_variant())
            self._ledger = dataclasses.replace(ledger, xi=cfg.xi_fraction * ledger.R)
        return self._ledger

    def system_observables(self, ens: Ensemble) -> Dict[str, float]:
        states = ens.states
        n = states.shape[0]
        a = tilt_from(self.run_config.a_tilde, self.params)
        return {
            "t": ens.time,
            "mean_x": float(np.mean(states[:, 0])),
            "mean_c": float(np.mean(states[:, 1])),
            "mean_x2": float(np.mean(states[:, 0] ** 2)),
            "mean_c2": float(np.mean(states[:, 1] ** 2)),
            "mean_H": float(np.mean(H(states, self.params))),
            "log_mean_H_tilde": float(logsumexp(H_tilde_log(states, a, self.params)) - math.log(n)),
        }

    def coupled_observables(self, cens: CoupledEnsemble, ledger: CouplingLedger) -> Dict[str, float]:
        row = self.system_observables(cens.system)
        zs, zbars = cens.system.states, cens.paired_limit()
        r = distance.pair_distance(zs, zbars, ledger)
        _, phi_rc = mollifiers(switching_argument(cens), cens.xi, ledger.R)
        row.update({
            "mean_r": float(np.mean(r)),
            "w1_bound": coupled_w1_bound((zs, zbars), 1, ledger.delta),
            "mean_r_delta": weighted_mean_distance((zs, zbars), ledger.delta),
            "mean_f": float(np.mean(distance.profile_for(ledger).f(r))),
            "mean_G": float(np.mean(distance.G_weights(zs, zbars, ledger))),
            "rho": distance.rho(zs, zbars, ledger),
            "reflection_fraction": float(np.mean(phi_rc > 0)),
        })
        return row

    def _plan(self, dt: Optional[float], steps: Optional[int], stride: Optional[int]):
        cfg = self.run_config
        dt = cfg.dt if dt is None else dt
        steps = cfg.n_steps if steps is None else steps
        stride = cfg.sample_stride if stride is None else stride
        return dt, steps, max(1, stride)

    def system_trajectory(self, seed: int, n: int, dt: float, steps: int,
                          stride: int) -> Iterator[Ensemble]:
        """Ensembles at the sample times (step 0, every stride steps and the last step)."""
        cfg = self.run_config
        ens = initial_ensemble(n, seed, cfg.init_kind, cfg.init_scale)
        yield ens
        for k in range(1, steps + 1):
            ens = step_particles(ens, self.kx, self.kc, self.params, dt, clamp=cfg.clamp, workers=self.threads)
            if k % stride == 0 or k == steps:
                yield ens

    def simulate(self, seed: Optional[int] = None, n: Optional[int] = None, dt: Optional[float] = None,
                 steps: Optional[int] = None, stride: Optional[int] = None) -> List[Dict[str, float]]:
        """Run the N-particle system and return one record per sample time."""
        cfg = self.run_config
        seed = cfg.seed if seed is None else seed
        n = cfg.n_particles if n is None else n
        dt, steps, stride = self._plan(dt, steps, stride)
        records = [self.system_observables(ens) for ens in self.system_trajectory(seed, n, dt, steps, stride)]
        logger.debug(f"simulate: seed={seed} N={n} steps={steps} samples={len(records)}")
        return records

    def initial_pair(self, seed: int, n: int, m: int, coupling: str,
                     ledger: CouplingLedger) -> CoupledEnsemble:
        """Pairs start equal: both members are drawn from the same initial streams."""
        cfg = self.run_config
        system = initial_ensemble(n, seed, cfg.init_kind, cfg.init_scale, role="system")
        limit = initial_ensemble(m, seed, cfg.init_kind, cfg.init_scale, role="limit")
        return CoupledEnsemble(system, limit, coupling, ledger.xi)

    def coupled_trajectory(self, seed: int, n: int, m: int, coupling: str, dt: float, steps: int,
                           stride: int) -> Iterator[CoupledEnsemble]:
        if coupling == "none":
            raise ConfigError("a coupled run needs a coupling mode", field="coupling")
        check_coupling_noise(coupling, self.params)
        ledger = self.ledger()
        cens = self.initial_pair(seed, n, max(m, n, 2), coupling, ledger)
        yield cens
        for k in range(1, steps + 1):
            cens = step_coupled(cens, self.kx, self.kc, self.params, ledger, dt,
                                clamp=self.run_config.clamp, workers=self.threads)
            if k % stride == 0 or k == steps:
                yield cens

    def couple(self, seed: Optional[int] = None, n: Optional[int] = None, m: Optional[int] = None,
               coupling: Optional[str] = None, dt: Optional[float] = None, steps: Optional[int] = None,
               stride: Optional[int] = None) -> List[Dict[str, float]]:
        """Run the coupled system/limit pairs and return one record per sample time."""
        cfg = self.run_config
        seed = cfg.seed if seed is None else seed
        n = cfg.n_particles if n is None else n
        m = cfg.proxy_size if m is None else m
        coupling = cfg.coupling if coupling is None else coupling
        dt, steps, stride = self._plan(dt, steps, stride)
        records = [self.coupled_observables(cens, self.ledger())
                   for cens in self.coupled_trajectory(seed, n, m, coupling, dt, steps, stride)]
        logger.debug(f"couple: seed={seed} N={n} M={m} coupling={coupling} samples={len(records)}")
        return records

    def run(self, mode: str = "simulate", store: Optional[RunStore] = None,
            replicas: Optional[int] = None) -> List[List[Dict[str, float]]]:
        """All replicas of one mode; series files are written when a store is given."""
        if mode not in ("simulate", "couple"):
            raise ValueError("mode must be 'simulate' or 'couple'")
        replicas = self.run_config.replicas if replicas is None else replicas
        kind = "system" if mode == "simulate" else "coupled"
        results = []
        for k in range(replicas):
            seed = replica_seed(self.run_config.seed, k)
            records = self.simulate(seed) if mode == "simulate" else self.couple(seed)
            results.append(records)
            if store is not None:
                store.write_series(RunStore.series_name(kind, k, replicas), records)
        return results


def run(run_config, mode: str = "simulate", store: Optional[RunStore] = None,
        threads: Optional[int] = None) -> List[List[Dict[str, float]]]:
    return SimulationService(run_config, threads).run(mode, store)
