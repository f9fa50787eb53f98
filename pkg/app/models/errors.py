"""Exceptions raised by the simulator."""

from typing import Optional


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation (non-finite state, bad parameter)."""


class AdmissibilityError(ValueError):
    """The decay rate lambda violates L_X/8 + L_C(2+1/8) < 1 - lambda/2."""


class DerivationError(ValueError):
    """A derived constant of the coupling ledger failed a positivity or ordering requirement."""

    def __init__(self, quantity: str, message: str):
        super().__init__(f"{quantity}: {message}")
        self.quantity = quantity


class IntegrationBlowUpError(RuntimeError):
    """The Euler-Maruyama state left the representable range."""

    def __init__(self, step: int, time: float, detail: str = ""):
        hint = "reduce dt or enable the clamp (clamp = true)"
        super().__init__(f"integration blow-up at step {step} (t={time:.6g}){': ' + detail if detail else ''}; {hint}")
        self.step = step
        self.time = time


class ConfigError(ValueError):
    """Invalid run configuration, with line/field diagnostics when available."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field
