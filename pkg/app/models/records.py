"""Result records: numerical check reports, sample clouds and rate fits."""

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from app.logger import default_logger as logger
from app.models.params import as_states


@dataclass
class Check:
    """Outcome of one numerical inequality.

    slack is bound minus value (in log space when log_space is set); negative means violated.
    """

    name: str
    passed: bool
    slack: float
    where: Optional[float] = None
    log_space: bool = False
    detail: str = ""

    def to_dict(self) -> dict:
        data = asdict(self)
        # JSON has no inf/nan
        for key in ("slack", "where"):
            value = data[key]
            if value is not None and not math.isfinite(value):
                data[key] = repr(value)
        return data


@dataclass
class CheckReport:
    """Named collection of checks; passes when every check passes."""

    title: str
    checks: List[Check] = field(default_factory=list)

    def add(self, name: str, passed: bool, slack: float, where: Optional[float] = None,
            log_space: bool = False, detail: str = "") -> Check:
        check = Check(name, bool(passed), float(slack), where, log_space, detail)
        self.checks.append(check)
        if not check.passed:
            logger.warning(f"{self.title}: '{name}' fails (slack {check.slack:.6g}"
                           f"{'' if where is None else f' at r={where:.6g}'}) {detail}".rstrip())
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


class SampleCloud:
    """Finite sample of states with equal weights (an empirical law)."""

    def __init__(self, points):
        self._points = np.array(as_states(points), dtype=float, copy=True)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def size(self) -> int:
        return self._points.shape[0]

    def mean(self) -> np.ndarray:
        return self._points.mean(axis=0)

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of a rate: slope with a confidence interval."""

    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    r_squared: float
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SeriesEstimate:
    """Per-time mean of an observable across replicas, with standard errors when available."""

    t: np.ndarray
    mean: np.ndarray
    stderr: Optional[np.ndarray]
    replicas: int

    @property
    def errors_available(self) -> bool:
        return self.stderr is not None
