"""Interaction kernels K: R^2 -> R applied to state differences."""

import math
from typing import Callable, Optional

import numpy as np

from app.models.errors import DomainError


class Kernel:
    """Lipschitz interaction kernel with K(0, 0) = 0.

    Kinds:
        zero          K = 0
        linear        K(dz) = a11 * dx + a12 * dc
        bounded_tanh  K(dz) = scale * tanh(rate * dx)
        custom        K(dz) = fn(dx, dc), vectorized over numpy arrays
    """

    VALID_KINDS = ["zero", "linear", "bounded_tanh", "custom"]

    def __init__(self, kind: str = "zero", lipschitz_bound: Optional[float] = None,
                 a11: float = 0.0, a12: float = 0.0, scale: float = 0.0, rate: float = 0.0,
                 fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None):
        if kind not in self.VALID_KINDS:
            raise ValueError(f"Kernel kind must be one of: {', '.join(self.VALID_KINDS)}")
        self._kind = kind
        self._a11 = float(a11)
        self._a12 = float(a12)
        self._scale = float(scale)
        self._rate = float(rate)
        self._fn = fn
        if kind == "custom" and fn is None:
            raise ValueError("custom kernel needs a callable")
        self.lipschitz_bound = self.natural_lipschitz() if lipschitz_bound is None else lipschitz_bound

        origin = float(np.asarray(self.evaluate(np.zeros(1), np.zeros(1)))[0])
        if origin != 0.0:
            raise DomainError(f"kernel must vanish at (0, 0), got {origin}")

    @classmethod
    def zero(cls) -> "Kernel":
        return cls("zero", 0.0)

    @classmethod
    def linear(cls, a11: float, a12: float, lipschitz_bound: Optional[float] = None) -> "Kernel":
        return cls("linear", lipschitz_bound, a11=a11, a12=a12)

    @classmethod
    def bounded_tanh(cls, scale: float, rate: float, lipschitz_bound: Optional[float] = None) -> "Kernel":
        return cls("bounded_tanh", lipschitz_bound, scale=scale, rate=rate)

    @classmethod
    def custom(cls, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], lipschitz_bound: float) -> "Kernel":
        return cls("custom", lipschitz_bound, fn=fn)

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def is_zero(self) -> bool:
        return self._kind == "zero" or (self._kind == "linear" and self._a11 == 0.0 and self._a12 == 0.0)

    @property
    def lipschitz_bound(self) -> float:
        """Declared Lipschitz constant L for the L1 norm on differences."""
        return self._lipschitz_bound

    @lipschitz_bound.setter
    def lipschitz_bound(self, value: float):
        value = float(value)
        if not math.isfinite(value) or value < 0:
            raise ValueError("lipschitz_bound must be finite and non-negative")
        if value < self.natural_lipschitz() * (1 - 1e-12):
            raise ValueError(
                f"declared lipschitz_bound {value} is below the kernel's constant {self.natural_lipschitz()}")
        self._lipschitz_bound = value

    def natural_lipschitz(self) -> float:
        """Smallest valid L for built-in kinds; 0 for custom kernels (declared value is trusted)."""
        if self._kind == "linear":
            return abs(self._a11) + abs(self._a12)
        if self._kind == "bounded_tanh":
            return abs(self._scale * self._rate)
        return 0.0

    def evaluate(self, dx, dc):
        """Evaluate K at the differences (dx, dc); accepts scalars or arrays of equal shape."""
        if self._kind == "zero":
            return np.zeros(np.broadcast(dx, dc).shape)
        if self._kind == "linear":
            return self._a11 * dx + self._a12 * dc
        if self._kind == "bounded_tanh":
            return self._scale * np.tanh(self._rate * dx)
        return np.asarray(self._fn(dx, dc), dtype=float)

    def to_dict(self) -> dict:
        if self._kind == "custom":
            raise TypeError("custom kernels cannot be serialized")
        return {
            "kind": self._kind,
            "a11": self._a11,
            "a12": self._a12,
            "scale": self._scale,
            "rate": self._rate,
            "lipschitz": self._lipschitz_bound,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Kernel":
        return cls(
            kind=data.get("kind", "zero"),
            lipschitz_bound=data.get("lipschitz"),
            a11=data.get("a11", 0.0),
            a12=data.get("a12", 0.0),
            scale=data.get("scale", 0.0),
            rate=data.get("rate", 0.0),
        )

    def __str__(self) -> str:
        if self._kind == "linear":
            return f"Kernel(linear a11={self._a11}, a12={self._a12}, L={self._lipschitz_bound})"
        if self._kind == "bounded_tanh":
            return f"Kernel(bounded_tanh scale={self._scale}, rate={self._rate}, L={self._lipschitz_bound})"
        return f"Kernel({self._kind}, L={self._lipschitz_bound})"
