"""FitzHugh-Nagumo model parameters and single-neuron states."""

import math

import numpy as np

from app.models.errors import DomainError


def _finite_real(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise TypeError(f"{name} must be a real number")
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value}")
    return value


class ModelParams:
    """Constants of the stochastic FitzHugh-Nagumo neuron with validation."""

    def __init__(self, alpha: float, beta: float, gamma: float,
                 sigma_x: float, sigma_c: float):
        """
        Initialize model parameters.

        Args:
            alpha: stimulus current
            beta: recovery offset (>= 0; 0 only for degenerate checks)
            gamma: recovery gain (> 0)
            sigma_x: noise level on the membrane potential (>= 0)
            sigma_c: noise level on the adaptation variable (>= 0)
        """
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.sigma_x = sigma_x
        self.sigma_c = sigma_c

    def require_noise(self):
        """Stochastic runs and the ledger need at least one noise channel."""
        if self._sigma_x == 0.0 and self._sigma_c == 0.0:
            raise DomainError("at least one of sigma_x, sigma_c must be positive")
        return self

    @property
    def alpha(self) -> float:
        return self._alpha

    @alpha.setter
    def alpha(self, value: float):
        self._alpha = _finite_real(value, "alpha")

    @property
    def beta(self) -> float:
        return self._beta

    @beta.setter
    def beta(self, value: float):
        value = _finite_real(value, "beta")
        if value < 0:
            raise DomainError("beta must be non-negative")
        self._beta = value

    @property
    def gamma(self) -> float:
        return self._gamma

    @gamma.setter
    def gamma(self, value: float):
        value = _finite_real(value, "gamma")
        if value <= 0:
            raise DomainError("gamma must be positive")
        self._gamma = value

    @property
    def sigma_x(self) -> float:
        return self._sigma_x

    @sigma_x.setter
    def sigma_x(self, value: float):
        value = _finite_real(value, "sigma_x")
        if value < 0:
            raise DomainError("sigma_x must be non-negative")
        self._sigma_x = value

    @property
    def sigma_c(self) -> float:
        return self._sigma_c

    @sigma_c.setter
    def sigma_c(self, value: float):
        value = _finite_real(value, "sigma_c")
        if value < 0:
            raise DomainError("sigma_c must be non-negative")
        self._sigma_c = value

    @property
    def H0(self) -> float:
        """Offset beta^2/gamma + alpha^2 that makes H non-negative."""
        return self._beta ** 2 / self._gamma + self._alpha ** 2

    def to_dict(self) -> dict:
        return {
            "alpha": self._alpha,
            "beta": self._beta,
            "gamma": self._gamma,
            "sigma_x": self._sigma_x,
            "sigma_c": self._sigma_c,
        }

    @classmethod
    def from_dict(cls, data: dict):
        return cls(
            alpha=data.get("alpha", 0.0),
            beta=data["beta"],
            gamma=data["gamma"],
            sigma_x=data.get("sigma_x", 0.0),
            sigma_c=data.get("sigma_c", 0.0),
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, ModelParams) and self.to_dict() == other.to_dict()

    def __str__(self) -> str:
        return (f"ModelParams(alpha={self._alpha}, beta={self._beta}, gamma={self._gamma}, "
                f"sigma_x={self._sigma_x}, sigma_c={self._sigma_c})")


class State:
    """One neuron state Z = (x, c)."""

    def __init__(self, x: float, c: float):
        self._x = _finite_real(x, "x")
        self._c = _finite_real(c, "c")

    @property
    def x(self) -> float:
        """Membrane potential."""
        return self._x

    @property
    def c(self) -> float:
        """Adaptation variable."""
        return self._c

    def as_array(self) -> np.ndarray:
        return np.array([self._x, self._c], dtype=float)

    @classmethod
    def from_array(cls, values) -> "State":
        return cls(values[0], values[1])

    def __sub__(self, other: "State") -> "State":
        return State(self._x - other.x, self._c - other.c)

    def __eq__(self, other) -> bool:
        return isinstance(other, State) and self._x == other.x and self._c == other.c

    def __hash__(self):
        return hash((self._x, self._c))

    def __repr__(self) -> str:
        return f"State(x={self._x!r}, c={self._c!r})"


def as_states(values) -> np.ndarray:
    """Coerce a State, a sequence of States or an (n, 2) array into a finite (n, 2) float array."""
    if isinstance(values, State):
        arr = values.as_array()[None, :]
    elif isinstance(values, (list, tuple)) and values and isinstance(values[0], State):
        arr = np.array([[s.x, s.c] for s in values], dtype=float)
    else:
        arr = np.asarray(values, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError(f"states must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("states must be finite")
    return arr
