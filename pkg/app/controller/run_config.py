"""Run configuration parsed from a flat key = value file."""

import math
from typing import Any, Dict, List, Optional, Tuple

import config
from app.models.errors import ConfigError, DomainError
from app.models.kernel import Kernel
from app.models.params import ModelParams

_FLOAT = "float"
_OPT_FLOAT = "optional float"
_INT = "int"
_STR = "str"
_BOOL = "bool"
_INT_LIST = "int list"

# name -> (kind, default)
FIELDS: Dict[str, Tuple[str, Any]] = {
    "alpha": (_FLOAT, 1.0),
    "beta": (_FLOAT, 1.0),
    "gamma": (_FLOAT, 1.0),
    "sigma_x": (_FLOAT, 0.5),
    "sigma_c": (_FLOAT, 0.5),
    "kx_kind": (_STR, "zero"),
    "kx_a11": (_FLOAT, 0.0),
    "kx_a12": (_FLOAT, 0.0),
    "kx_scale": (_FLOAT, 0.0),
    "kx_rate": (_FLOAT, 0.0),
    "kx_lipschitz": (_OPT_FLOAT, None),
    "kc_kind": (_STR, "zero"),
    "kc_a11": (_FLOAT, 0.0),
    "kc_a12": (_FLOAT, 0.0),
    "kc_scale": (_FLOAT, 0.0),
    "kc_rate": (_FLOAT, 0.0),
    "kc_lipschitz": (_OPT_FLOAT, None),
    "n_particles": (_INT, config.DEFAULT_N),
    "proxy_size": (_INT, config.DEFAULT_PROXY_SIZE),
    "dt": (_FLOAT, config.DEFAULT_DT),
    "horizon": (_FLOAT, config.DEFAULT_HORIZON),
    "sample_stride": (_INT, config.DEFAULT_SAMPLE_STRIDE),
    "seed": (_INT, 0),
    "coupling": (_STR, "synchronous"),
    "clamp": (_BOOL, False),
    "eta": (_FLOAT, config.DEFAULT_ETA),
    "delta_tilde": (_FLOAT, config.DEFAULT_DELTA_TILDE),
    "a_tilde": (_FLOAT, config.DEFAULT_A_TILDE),
    "c_init_exp": (_FLOAT, config.DEFAULT_C_INIT_EXP),
    "xi_fraction": (_FLOAT, config.DEFAULT_XI_FRACTION),
    "lambda_override": (_OPT_FLOAT, None),
    "l_x_max": (_FLOAT, config.L_X_MAX),
    "l_c_max": (_FLOAT, config.L_C_MAX),
    "init_kind": (_STR, "gaussian"),
    "init_scale": (_FLOAT, 1.0),
    "replicas": (_INT, 1),
    "threads": (_INT, 1),
    "out_dir": (_STR, "runs"),
    "verify_n_values": (_INT_LIST, [16, 32, 64, 128]),
    "verify_proxy_size": (_INT, 1024),
    "verify_horizon": (_FLOAT, 2.0),
    "verify_dt": (_FLOAT, 1e-2),
    "verify_replicas": (_INT, 8),
    "verify_samples": (_INT, config.VERIFY_TIME_SAMPLES),
}

SEED_LIMIT = 2 ** 64


def _parse_value(kind: str, text: str, line: Optional[int], name: str):
    try:
        if kind == _FLOAT:
            value = float(text)
            if not math.isfinite(value):
                raise ValueError("not finite")
            return value
        if kind == _OPT_FLOAT:
            return None if text.lower() == "none" else _parse_value(_FLOAT, text, line, name)
        if kind == _INT:
            return int(text)
        if kind == _BOOL:
            lowered = text.lower()
            if lowered not in ("true", "false"):
                raise ValueError("expected true or false")
            return lowered == "true"
        if kind == _INT_LIST:
            return [int(part) for part in text.split(",") if part.strip()]
        return text
    except ValueError as e:
        raise ConfigError(f"cannot parse '{text}' as {kind} ({e})", line=line, field=name) from None


def _format_value(kind: str, value) -> str:
    if value is None:
        return "none"
    if kind in (_FLOAT, _OPT_FLOAT):
        return repr(float(value))
    if kind == _BOOL:
        return "true" if value else "false"
    if kind == _INT_LIST:
        return ",".join(str(v) for v in value)
    return str(value)


class RunConfig:
    """Every knob of a run, validated on construction and on every override."""

    def __init__(self, **values):
        unknown = sorted(set(values) - set(FIELDS))
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(unknown)}", field=unknown[0])
        self._values = {name: default for name, (_, default) in FIELDS.items()}
        self._values.update(values)
        if isinstance(self._values["verify_n_values"], list):
            self._values["verify_n_values"] = list(self._values["verify_n_values"])
        self.validate()

    def __getattr__(self, name: str):
        values = self.__dict__.get("_values")
        if values is not None and name in values:
            return values[name]
        raise AttributeError(name)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        """Parse `key = value` lines; '#' starts a comment, blank lines are skipped."""
        values = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("expected 'key = value'", line=number)
            key, _, text_value = (part.strip() for part in line.partition("="))
            if key not in FIELDS:
                raise ConfigError("unknown key", line=number, field=key)
            if key in values:
                raise ConfigError("duplicate key", line=number, field=key)
            values[key] = _parse_value(FIELDS[key][0], text_value, number, key)
        return cls(**values)

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from None
        return cls.from_text(text)

    def to_text(self) -> str:
        return "".join(f"{name} = {_format_value(kind, self._values[name])}\n"
                       for name, (kind, _) in FIELDS.items())

    def to_dict(self) -> Dict[str, Any]:
        return {name: (list(v) if isinstance(v, list) else v) for name, v in self._values.items()}

    def with_overrides(self, **overrides) -> "RunConfig":
        """Copy with the given values replaced; None leaves a value unchanged."""
        values = self.to_dict()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig(**values)

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.to_dict() == other.to_dict()

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def validate(self):
        v = self._values
        for name, (kind, _) in FIELDS.items():
            value = v[name]
            if kind in (_FLOAT, _INT) and (isinstance(value, bool) or not isinstance(value, (int, float))):
                raise ConfigError(f"expected a number, got {value!r}", field=name)
            if kind == _INT and not isinstance(value, int):
                raise ConfigError(f"expected an integer, got {value!r}", field=name)

        for name in ("n_particles", "proxy_size", "sample_stride", "replicas", "threads",
                     "verify_proxy_size", "verify_replicas", "verify_samples"):
            if v[name] < 1:
                raise ConfigError("must be a positive integer", field=name)
        for name in ("dt", "verify_dt", "init_scale", "a_tilde", "c_init_exp", "xi_fraction", "delta_tilde"):
            if not v[name] > 0:
                raise ConfigError("must be positive", field=name)
        if v["horizon"] < 0 or v["verify_horizon"] < 0:
            raise ConfigError("must be non-negative", field="horizon" if v["horizon"] < 0 else "verify_horizon")
        if not 0 <= v["seed"] < SEED_LIMIT:
            raise ConfigError("must be a 64-bit unsigned integer", field="seed")
        if not v["eta"] > 4:
            raise ConfigError("must exceed 4", field="eta")
        if not 0 <= v["l_c_max"] < 1:
            raise ConfigError("must lie in [0, 1)", field="l_c_max")
        if v["l_x_max"] < 0:
            raise ConfigError("must be non-negative", field="l_x_max")
        if v["coupling"] not in config.COUPLING_MODES:
            raise ConfigError(f"must be one of: {', '.join(config.COUPLING_MODES)}", field="coupling")
        if v["init_kind"] not in config.INIT_KINDS:
            raise ConfigError(f"must be one of: {', '.join(config.INIT_KINDS)}", field="init_kind")
        if not v["verify_n_values"] or any(n < 1 for n in v["verify_n_values"]):
            raise ConfigError("must list positive integers", field="verify_n_values")

        steps = self.n_steps
        if abs(steps * v["dt"] - v["horizon"]) > 1e-9 * max(1.0, v["horizon"]):
            raise ConfigError(f"horizon {v['horizon']} is not a multiple of dt {v['dt']}", field="horizon")
        if steps > 0 and steps % v["sample_stride"] != 0:
            raise ConfigError(f"must divide the step count {steps}", field="sample_stride")
        if v["coupling"] != "none" and v["proxy_size"] < max(v["n_particles"], 2):
            raise ConfigError("must be at least max(n_particles, 2)", field="proxy_size")

        try:
            self.model_params()
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e), field="model parameters") from None
        for prefix in ("kx", "kc"):
            try:
                self._kernel(prefix)
            except (TypeError, ValueError) as e:
                raise ConfigError(str(e), field=f"{prefix}_lipschitz") from None
        L_X, L_C = self.lipschitz_constants()
        if L_X > v["l_x_max"] or L_C > v["l_c_max"]:
            raise ConfigError(f"declared constants L_X={L_X}, L_C={L_C} exceed l_x_max/l_c_max",
                              field="kx_lipschitz" if L_X > v["l_x_max"] else "kc_lipschitz")

    def model_params(self) -> ModelParams:
        v = self._values
        return ModelParams(v["alpha"], v["beta"], v["gamma"], v["sigma_x"], v["sigma_c"])

    def _kernel(self, prefix: str) -> Kernel:
        v = self._values
        kind = v[f"{prefix}_kind"]
        if kind not in config.KERNEL_KINDS:
            raise DomainError(f"{prefix}_kind must be one of: {', '.join(config.KERNEL_KINDS)}")
        return Kernel(kind, v[f"{prefix}_lipschitz"], a11=v[f"{prefix}_a11"], a12=v[f"{prefix}_a12"],
                      scale=v[f"{prefix}_scale"], rate=v[f"{prefix}_rate"])

    def kernels(self) -> Tuple[Kernel, Kernel]:
        return self._kernel("kx"), self._kernel("kc")

    def lipschitz_constants(self) -> Tuple[float, float]:
        kx, kc = self.kernels()
        return kx.lipschitz_bound, kc.lipschitz_bound

    def verify_sizes(self) -> List[int]:
        return list(self._values["verify_n_values"])
