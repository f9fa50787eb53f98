"""Particle ensembles and coupled pairs of ensembles."""

from typing import Optional

import numpy as np

from app.models.errors import DomainError
from app.models.params import as_states


class Ensemble:
    """N particle states plus the key of their counter-based noise streams.

    The noise of particle i at step k is a pure function of (seed, role, channel, k, i),
    so the stream handle of particle i is the tuple (seed, role, i).
    """

    VALID_ROLES = ["system", "limit"]

    def __init__(self, states, seed: int, role: str = "system", time: float = 0.0, step: int = 0):
        self.states = states
        if role not in self.VALID_ROLES:
            raise ValueError(f"role must be one of: {', '.join(self.VALID_ROLES)}")
        self._seed = int(seed)
        self._role = role
        self.time = time
        self._step = int(step)

    @property
    def states(self) -> np.ndarray:
        """(N, 2) array of (x, c)."""
        return self._states

    @states.setter
    def states(self, value):
        arr = as_states(value)
        if arr.shape[0] < 1:
            raise DomainError("an ensemble needs at least one particle")
        self._states = np.array(arr, dtype=float, copy=True)

    @property
    def time(self) -> float:
        return self._time

    @time.setter
    def time(self, value: float):
        value = float(value)
        if value < 0:
            raise ValueError("time must be non-negative")
        self._time = value

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def role(self) -> str:
        return self._role

    @property
    def step(self) -> int:
        """Number of completed steps (the counter of the noise streams)."""
        return self._step

    @property
    def size(self) -> int:
        return self._states.shape[0]

    def advanced(self, states: np.ndarray, dt: float) -> "Ensemble":
        """New ensemble one step later with the given states."""
        nxt = Ensemble.__new__(Ensemble)
        nxt._states = states
        nxt._seed = self._seed
        nxt._role = self._role
        nxt._time = self._time + dt
        nxt._step = self._step + 1
        return nxt

    def copy(self) -> "Ensemble":
        return Ensemble(self._states, self._seed, self._role, self._time, self._step)

    def __len__(self) -> int:
        return self.size

    def __str__(self) -> str:
        return f"Ensemble(role={self._role}, N={self.size}, t={self._time:.6g}, step={self._step})"


class CoupledEnsemble:
    """N pairs (Z^{i,N}, Zbar^i) driven by coupled noise.

    With proxy_mode "self_as_proxy" the limit member is an M-particle cloud advanced with its own
    empirical convolution, and its first N particles are paired with the system. With
    "frozen_proxy" the limit holds N particles and convolves against a fixed external cloud.
    """

    VALID_COUPLINGS = ["synchronous", "reflection_x", "reflection_c"]
    VALID_PROXY_MODES = ["self_as_proxy", "frozen_proxy"]

    def __init__(self, system: Ensemble, limit: Ensemble, coupling: str, xi: float,
                 proxy_mode: str = "self_as_proxy", frozen_proxy: Optional[np.ndarray] = None):
        if coupling not in self.VALID_COUPLINGS:
            raise ValueError(f"coupling must be one of: {', '.join(self.VALID_COUPLINGS)}")
        if proxy_mode not in self.VALID_PROXY_MODES:
            raise ValueError(f"proxy_mode must be one of: {', '.join(self.VALID_PROXY_MODES)}")
        if system.role != "system" or limit.role != "limit":
            raise ValueError("system/limit ensembles must carry the matching roles")
        if proxy_mode == "self_as_proxy" and limit.size < max(system.size, 2):
            raise ValueError("the self-interacting proxy needs M >= max(N, 2) particles")
        if proxy_mode == "frozen_proxy":
            if frozen_proxy is None:
                raise ValueError("frozen_proxy mode needs a proxy cloud")
            if limit.size != system.size:
                raise ValueError("with a frozen proxy the limit ensemble holds exactly N particles")
            frozen_proxy = as_states(frozen_proxy).copy()
        if xi <= 0:
            raise ValueError("xi must be positive")
        self.system = system
        self.limit = limit
        self._coupling = coupling
        self._xi = float(xi)
        self._proxy_mode = proxy_mode
        self._frozen_proxy = frozen_proxy

    @property
    def coupling(self) -> str:
        return self._coupling

    @property
    def xi(self) -> float:
        return self._xi

    @property
    def proxy_mode(self) -> str:
        return self._proxy_mode

    @property
    def frozen_proxy(self) -> Optional[np.ndarray]:
        return self._frozen_proxy

    @property
    def n_pairs(self) -> int:
        return self.system.size

    @property
    def time(self) -> float:
        return self.system.time

    def paired_limit(self) -> np.ndarray:
        """States Zbar^1..Zbar^N paired with the system particles."""
        return self.limit.states[: self.n_pairs]

    def convolution_cloud(self) -> np.ndarray:
        """Cloud standing in for the limit law at the current time."""
        if self._proxy_mode == "frozen_proxy":
            return self._frozen_proxy
        return self.limit.states

    def advanced(self, system: Ensemble, limit: Ensemble) -> "CoupledEnsemble":
        return CoupledEnsemble(system, limit, self._coupling, self._xi, self._proxy_mode, self._frozen_proxy)

    def __str__(self) -> str:
        return (f"CoupledEnsemble(coupling={self._coupling}, N={self.n_pairs}, M={self.limit.size}, "
                f"proxy={self._proxy_mode}, t={self.time:.6g})")
