import json
import os

import pytest

from app.controller.fhn_cli import (EXIT_BLOWUP, EXIT_INADMISSIBLE, EXIT_OK, EXIT_USAGE, FhnCLI, main)
from app.controller.run_config import RunConfig
from app.storage.run_store import RunStore


def write_config(tmp_path, name="run.cfg", **fields):
    cfg = RunConfig(out_dir=str(tmp_path / "out"), **fields)
    path = tmp_path / name
    path.write_text(cfg.to_text(), encoding="utf-8")
    return str(path)


@pytest.fixture
def quick_fields():
    return dict(n_particles=8, proxy_size=16, dt=0.01, horizon=0.1, sample_stride=5)


def test_params_with_zero_kernels(tmp_path):
    out = tmp_path / "params"
    assert main(["params", "--out", str(out)]) == EXIT_OK
    with open(out / "manifest.json", encoding="utf-8") as handle:
        manifest = json.load(handle)
    assert manifest["ledger_checks"]["passed"]
    assert manifest["admissibility"]["passed"]
    assert len(manifest["content_hash"]) == 64


def test_params_with_strong_kernel_is_inadmissible(tmp_path):
    path = write_config(tmp_path, kx_kind="linear", kx_a11=0.1)
    assert main(["params", "--config", path]) == EXIT_INADMISSIBLE
    assert os.path.exists(tmp_path / "out" / "manifest.json")


def test_simulate_with_zero_horizon(tmp_path, quick_fields):
    quick_fields.update(horizon=0.0)
    path = write_config(tmp_path, **quick_fields)
    assert main(["simulate", "--config", path]) == EXIT_OK
    rows = RunStore.read_series(str(tmp_path / "out" / "series_system.csv"))
    assert len(rows) == 1
    assert rows[0]["t"] == 0.0


def test_seed_and_out_overrides(tmp_path, quick_fields):
    path = write_config(tmp_path, **quick_fields)
    assert main(["simulate", "--config", path, "--seed", "7", "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["simulate", "--config", path, "--seed", "8", "--out", str(tmp_path / "b")]) == EXIT_OK
    a = RunStore.read_series(str(tmp_path / "a" / "series_system.csv"))
    b = RunStore.read_series(str(tmp_path / "b" / "series_system.csv"))
    assert len(a) == len(b) == 3
    assert a != b
    with open(tmp_path / "a" / "manifest.json", encoding="utf-8") as handle:
        assert "seed = 7" in json.load(handle)["config"]


def test_couple_writes_pair_series(tmp_path, quick_fields):
    path = write_config(tmp_path, **quick_fields)
    assert main(["couple", "--config", path]) == EXIT_OK
    assert os.path.exists(tmp_path / "out" / "series_coupled.csv")


def test_verify_lemmas(tmp_path):
    out = tmp_path / "verdicts"
    assert main(["verify", "lemmas", "--out", str(out)]) == EXIT_OK
    with open(out / "verdict_lemmas.json", encoding="utf-8") as handle:
        verdict = json.load(handle)
    assert verdict["criterion"] == "lemmas"
    assert verdict["pass"] is True


@pytest.mark.parametrize("text", [
    "bogus = 1\n",
    "eta = 4\n",
    "dt = fast\n",
])
def test_bad_config_is_a_usage_error(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text, encoding="utf-8")
    assert main(["params", "--config", str(path)]) == EXIT_USAGE


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == EXIT_USAGE


def test_usage_errors():
    cli = FhnCLI()
    assert cli.run([]) == EXIT_USAGE
    assert cli.run(["verify", "everything"]) == EXIT_USAGE
    assert cli.run(["simulate", "--seed", "soon"]) == EXIT_USAGE


def test_blow_up_exit_code(tmp_path):
    path = write_config(tmp_path, init_scale=1e5, dt=1.0, horizon=1.0, sample_stride=1,
                        n_particles=4, proxy_size=4)
    assert main(["simulate", "--config", path]) == EXIT_BLOWUP


CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def test_shipped_default_config_passes_params(tmp_path):
    path = os.path.join(CONFIGS, "default.cfg")
    assert main(["params", "--config", path, "--out", str(tmp_path / "default")]) == EXIT_OK
    assert os.path.exists(tmp_path / "default" / "manifest.json")


def test_shipped_strong_kernel_config_is_inadmissible(tmp_path):
    path = os.path.join(CONFIGS, "strong_kernel.cfg")
    assert main(["params", "--config", path, "--out", str(tmp_path / "strong")]) == EXIT_INADMISSIBLE


@pytest.mark.parametrize("command", ["simulate", "couple"])
def test_outputs_do_not_depend_on_threads(tmp_path, quick_fields, command):
    path = write_config(tmp_path, **quick_fields)
    out = tmp_path / "out"
    snapshots = []
    for threads in ("1", "8"):
        assert main([command, "--config", path, "--threads", threads]) == EXIT_OK
        snapshots.append({name: (out / name).read_bytes() for name in sorted(os.listdir(out))})
    assert "manifest.json" in snapshots[0]
    assert snapshots[0] == snapshots[1]
