"""Shared fixtures: default parameters, a derived ledger and small run configurations."""

import numpy as np
import pytest

from app.api.distance import derive_ledger
from app.controller.run_config import RunConfig
from app.models.kernel import Kernel
from app.models.params import ModelParams


@pytest.fixture
def params():
    return ModelParams(1.0, 1.0, 1.0, 0.5, 0.5)


@pytest.fixture(scope="session")
def ledger():
    return derive_ledger(ModelParams(1.0, 1.0, 1.0, 0.5, 0.5), 0.0, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_kernels():
    return Kernel.linear(0.1, 0.0), Kernel.zero()


@pytest.fixture
def small_config(tmp_path):
    return RunConfig(
        kx_kind="linear", kx_a11=0.1,
        n_particles=8, proxy_size=16, dt=0.01, horizon=0.1, sample_stride=5,
        out_dir=str(tmp_path / "out"),
        verify_n_values=[4, 8, 16], verify_proxy_size=32, verify_horizon=0.2, verify_dt=0.01,
        verify_replicas=2,
    )
