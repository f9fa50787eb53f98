import math
import os

import numpy as np
import pytest

import config
from app.api.simulation_service import SimulationService, resolve_threads
from app.api.verification_service import VerificationService, make_verdict, nonincreasing_excess
from app.models.errors import ConfigError
from app.models.records import SeriesEstimate
from app.storage.run_store import RunStore



def test_resolve_threads(monkeypatch):
    monkeypatch.setenv(config.THREADS_ENV, "6")
    assert resolve_threads(None, 1) == 6
    assert resolve_threads(2, 1) == 2
    monkeypatch.setenv(config.THREADS_ENV, "many")
    assert resolve_threads(None, 3) == 3
    monkeypatch.delenv(config.THREADS_ENV)
    assert resolve_threads(None, 4) == 4


def test_simulate_samples(small_config):
    records = SimulationService(small_config).simulate()
    assert [round(r["t"], 12) for r in records] == [0.0, 0.05, 0.1]
    assert set(records[0]) == {"t", "mean_x", "mean_c", "mean_x2", "mean_c2", "mean_H", "log_mean_H_tilde"}


def test_zero_horizon_gives_initial_snapshot(small_config):
    cfg = small_config.with_overrides(horizon=0.0)
    records = SimulationService(cfg).simulate()
    assert len(records) == 1
    assert records[0]["t"] == 0.0


def test_simulate_is_reproducible_across_threads(small_config):
    a = SimulationService(small_config, threads=1).simulate(n=300, steps=3, stride=1)
    b = SimulationService(small_config, threads=4).simulate(n=300, steps=3, stride=1)
    assert a == b


def test_couple_observables(small_config):
    records = SimulationService(small_config).couple()
    first = records[0]
    assert first["mean_r"] == 0.0
    assert first["w1_bound"] == 0.0
    assert first["mean_r_delta"] == 0.0
    assert all(r["mean_r_delta"] >= 0.0 for r in records)
    assert first["rho"] == 0.0
    assert first["mean_G"] >= 1.0
    assert all(math.isfinite(r["rho"]) for r in records)


def test_couple_needs_coupling(small_config):
    with pytest.raises(ConfigError):
        SimulationService(small_config).couple(coupling="none")


def test_ledger_variant(small_config):
    assert SimulationService(small_config).ledger_variant() == "standard"
    noisy_c = small_config.with_overrides(sigma_x=0.0, coupling="reflection_c")
    service = SimulationService(noisy_c)
    assert service.ledger_variant() == "appendix_b"
    assert service.ledger().xi == pytest.approx(noisy_c.xi_fraction * service.ledger().R)


def test_run_writes_replica_series(small_config, tmp_path):
    with RunStore(str(tmp_path / "run")) as store:
        results = SimulationService(small_config).run("simulate", store, replicas=2)
    assert len(results) == 2
    assert results[0] != results[1]
    rows = RunStore.read_series(str(tmp_path / "run" / "series_system_r1.csv"))
    assert rows == results[1]


def test_make_verdict_shape():
    verdict = make_verdict("ledger", True, 0, 0, configs=21)
    assert verdict == {"criterion": "ledger", "pass": True, "statistic": 0, "tolerance": 0,
                       "details": {"configs": 21}}


def test_nonincreasing_excess():
    t = np.arange(4.0)
    falling = SeriesEstimate(t, np.array([4.0, 3.0, 2.0, 1.0]), np.zeros(4), 2)
    rising = SeriesEstimate(t, np.array([1.0, 2.0, 3.0, 4.0]), np.zeros(4), 2)
    mask = np.ones(4, dtype=bool)
    assert nonincreasing_excess(falling, mask) <= 0
    assert nonincreasing_excess(rising, mask) == pytest.approx(3.0)


def test_verify_lemmas(small_config):
    verdict = VerificationService(small_config).run("lemmas")
    assert verdict["pass"], verdict["details"]["violations"]
    assert verdict["details"]["near_pairs"] > 0
    assert verdict["details"]["far_pairs"] > 0


def test_verify_ledger(small_config, monkeypatch):
    monkeypatch.setattr(config, "LEDGER_RANDOM_CONFIGS", 2)
    verdict = VerificationService(small_config).run("ledger")
    assert verdict["pass"], verdict["details"]["failures"]
    assert verdict["details"]["configs"] == 3


def test_verify_ot_oracle(small_config):
    verdict = VerificationService(small_config).run("ot-oracle")
    assert verdict["pass"]
    assert verdict["statistic"]["bound_violations"] == 0


def test_verify_determinism(small_config, tmp_path):
    with RunStore(str(tmp_path / "verdicts")) as store:
        verdict = VerificationService(small_config).run("determinism", store)
    assert verdict["pass"], verdict["details"]["mismatched"]
    assert os.path.exists(tmp_path / "verdicts" / "verdict_determinism.json")


def test_verify_lyapunov_bound_reports(small_config):
    verdict = VerificationService(small_config).run("lyapunov-bound")
    assert verdict["criterion"] == "lyapunov-bound"
    assert verdict["details"]["samples"] == 11
    assert math.isfinite(verdict["statistic"])


def test_verify_samples_sets_the_stride(small_config):
    cfg = small_config.with_overrides(verify_samples=5)
    verdict = VerificationService(cfg).run("lyapunov-bound")
    assert verdict["details"]["samples"] == 6


def test_verify_scaling_law_reports(small_config):
    verdict = VerificationService(small_config).run("scaling-law")
    assert verdict["details"]["sizes"] == [4, 8, 16]
    assert len(verdict["details"]["levels"]) == 3
    assert verdict["tolerance"] == list(config.SCALING_SLOPE)
    sweep = verdict["details"]["xi_sweep"]
    assert sweep["size"] == 16
    assert len(sweep["levels"]) == len(config.XI_SWEEP)


def test_unknown_criterion(small_config):
    with pytest.raises(ConfigError):
        VerificationService(small_config).run("everything")
