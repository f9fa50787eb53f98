import pytest

from app.controller.run_config import RunConfig
from app.models.errors import ConfigError


def test_defaults_are_valid():
    cfg = RunConfig()
    assert cfg.n_steps == 20_000
    assert cfg.coupling == "synchronous"
    assert cfg.lipschitz_constants() == (0.0, 0.0)


def test_text_round_trip(small_config):
    again = RunConfig.from_text(small_config.to_text())
    assert again == small_config
    assert again.to_text() == small_config.to_text()


def test_parse_comments_and_types():
    cfg = RunConfig.from_text(
        "# a comment\n"
        "\n"
        "gamma = 2.0   # trailing comment\n"
        "clamp = true\n"
        "lambda_override = 0.5\n"
        "verify_n_values = 8, 16\n"
    )
    assert cfg.gamma == 2.0
    assert cfg.clamp is True
    assert cfg.lambda_override == 0.5
    assert cfg.verify_sizes() == [8, 16]


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as info:
        RunConfig.from_text("gamma = 1.0\nbogus = 3\n")
    assert info.value.line == 2
    assert info.value.field == "bogus"


def test_duplicate_key():
    with pytest.raises(ConfigError) as info:
        RunConfig.from_text("seed = 1\nseed = 2\n")
    assert info.value.line == 2


def test_unparsable_value():
    with pytest.raises(ConfigError) as info:
        RunConfig.from_text("dt = fast\n")
    assert info.value.field == "dt"
    assert info.value.line == 1


def test_missing_equals_sign():
    with pytest.raises(ConfigError):
        RunConfig.from_text("gamma 1.0\n")


def test_eta_must_exceed_four():
    with pytest.raises(ConfigError) as info:
        RunConfig(eta=4.0)
    assert info.value.field == "eta"


def test_stride_must_divide_steps():
    with pytest.raises(ConfigError) as info:
        RunConfig(dt=0.1, horizon=1.0, sample_stride=3)
    assert info.value.field == "sample_stride"


def test_proxy_must_cover_particles():
    with pytest.raises(ConfigError):
        RunConfig(n_particles=64, proxy_size=32)
    assert RunConfig(n_particles=64, proxy_size=32, coupling="none").proxy_size == 32


def test_declared_lipschitz_above_maximum():
    with pytest.raises(ConfigError):
        RunConfig(kx_kind="linear", kx_a11=5.0)


def test_kernel_kind_validated():
    with pytest.raises(ConfigError):
        RunConfig(kc_kind="gaussian")


def test_seed_range():
    with pytest.raises(ConfigError):
        RunConfig(seed=-1)
    assert RunConfig(seed=2 ** 64 - 1).seed == 2 ** 64 - 1


def test_overrides_ignore_none(small_config):
    cfg = small_config.with_overrides(seed=9, out_dir=None)
    assert cfg.seed == 9
    assert cfg.out_dir == small_config.out_dir


def test_overrides_are_validated(small_config):
    with pytest.raises(ConfigError):
        small_config.with_overrides(coupling="mirror")


def test_model_params_and_kernels(small_config):
    p = small_config.model_params()
    kx, kc = small_config.kernels()
    assert p.gamma == 1.0
    assert kx.lipschitz_bound == pytest.approx(0.1)
    assert kc.is_zero


def test_from_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 5\nhorizon = 1.0\n", encoding="utf-8")
    assert RunConfig.from_file(str(path)).seed == 5
    with pytest.raises(ConfigError):
        RunConfig.from_file(str(tmp_path / "missing.cfg"))
