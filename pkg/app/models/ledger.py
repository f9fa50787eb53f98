"""Derived constants: Lyapunov rates and the coupling ledger."""

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict

from app.models.params import ModelParams


def _exp(log_value: float) -> float:
    """exp that saturates to inf instead of raising."""
    if log_value > 709.0:
        return math.inf
    return math.exp(log_value)


@dataclass(frozen=True)
class LyapunovConstants:
    """Rates of the Lyapunov functions H and H_tilde for given kernel constants."""

    lam: float
    B: float
    B_tilde: float
    a: float
    alpha_X: float
    beta_X: float
    alpha_C: float
    beta_C: float
    L_X: float
    L_C: float
    A: float
    C_init2: float
    EH0: float
    B_tilde_branches: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def coefficients(cls, gamma: float) -> Dict[str, float]:
        """Coefficient bundle of the interaction terms in the drift inequality of H."""
        return {
            "alpha_X": gamma / 2 + 0.5,
            "beta_X": 17 / 2,
            "alpha_C": 1 / 16,
            "beta_C": 0.5 + 1 / 32,
        }

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "LyapunovConstants":
        return cls(**data)


@dataclass(frozen=True)
class CouplingLedger:
    """Every constant parameterizing the concave distance f, the semimetric rho and its checks.

    Constants that leave double precision at realistic parameters are stored as natural logs.
    """

    params: ModelParams
    lyapunov: LyapunovConstants
    variant: str  # "standard" (reflection on X) or "appendix_b" (sigma_x = 0, reflection on C)
    noise: float  # sigma entering phi and g (sigma_x, or sigma_c for appendix_b)
    L_X: float
    L_C: float
    L_X_max: float
    L_C_max: float
    eta: float
    delta_tilde: float
    a_tilde: float
    C_init_exp: float
    delta: float
    R0: float
    R: float
    Cf1: float
    Cf2: float
    log_c: float
    c_branch: str
    log_c_branches: Dict[str, float]
    log_epsilon: float
    log_phi_min: float
    log_C1: float
    log_C2: float
    log_Cz: float
    q: float  # phi(r) = exp(-q r^2)
    xi: float

    @property
    def c(self) -> float:
        return _exp(self.log_c)

    @property
    def epsilon(self) -> float:
        return _exp(self.log_epsilon)

    @property
    def phi_min(self) -> float:
        return _exp(self.log_phi_min)

    @property
    def C1(self) -> float:
        return _exp(self.log_C1)

    @property
    def C2(self) -> float:
        return _exp(self.log_C2)

    @property
    def Cz(self) -> float:
        return _exp(self.log_Cz)

    @property
    def log_kappa(self) -> float:
        """log of (c + 2 epsilon B_tilde) / sigma^2, the curvature weight of g."""
        return self.log_c + math.log1p(self.eta) - 2 * math.log(self.noise)

    def to_dict(self) -> dict:
        data = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        data["params"] = self.params.to_dict()
        data["lyapunov"] = self.lyapunov.to_dict()
        data["log_c_branches"] = dict(self.log_c_branches)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CouplingLedger":
        data = dict(data)
        data["params"] = ModelParams.from_dict(data["params"])
        data["lyapunov"] = LyapunovConstants.from_dict(data["lyapunov"])
        return cls(**data)

    def with_scaled_c(self, factor: float) -> "CouplingLedger":
        """Copy with c multiplied by `factor`, everything else untouched (perturbation checks)."""
        return dataclasses.replace(self, log_c=self.log_c + math.log(factor))

    def table_rows(self):
        """(name, value) rows for printing; log-stored constants are shown as e^(...) when out of range."""
        def fmt_log(v):
            return f"{math.exp(v):.6g}" if -700 < v < 700 else f"e^({v:.6g})"

        lya = self.lyapunov
        return [
            ("variant", self.variant),
            ("lambda", f"{lya.lam:.6g}"),
            ("A", f"{lya.A:.6g}"),
            ("B", f"{lya.B:.6g}"),
            ("B_tilde", f"{lya.B_tilde:.6g}"),
            ("a", f"{lya.a:.6g}"),
            ("C_init2", f"{lya.C_init2:.6g}"),
            ("delta", f"{self.delta:.6g}"),
            ("R0", f"{self.R0:.6g}"),
            ("R", f"{self.R:.6g}"),
            ("C_f1", f"{self.Cf1:.6g}"),
            ("C_f2", f"{self.Cf2:.6g}"),
            ("c", fmt_log(self.log_c)),
            ("c binding branch", self.c_branch),
            ("epsilon", fmt_log(self.log_epsilon)),
            ("phi_min", fmt_log(self.log_phi_min)),
            ("C1", fmt_log(self.log_C1)),
            ("C2", fmt_log(self.log_C2)),
            ("Cz", fmt_log(self.log_Cz)),
            ("q", f"{self.q:.6g}"),
            ("xi", f"{self.xi:.6g}"),
        ]
