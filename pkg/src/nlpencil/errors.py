"""Exception hierarchy."""
from __future__ import annotations


class PencilError(Exception):
    pass


class DomainError(PencilError, ValueError):
    """Argument outside the domain of an operation (x outside [0, T], a <= 0, ...)."""


class ContractError(PencilError, ValueError):
    """Inputs that violate an operation's contract (mismatched traces, bad init)."""


class ConfigurationError(PencilError, ValueError):
    """Scenario or run configuration that fails its preconditions."""


class IntegrationError(PencilError, RuntimeError):
    pass


class IntegrationOverflow(IntegrationError):
    pass


class PoleError(PencilError, ArithmeticError):
    """A ratio was requested at a zero of its denominator."""

    def __init__(self, lam, name: str = ""):
        self.lam = complex(lam)
        self.name = name
        super().__init__(f"pole of {name or 'ratio'} at lambda={self.lam!r}")


class ConsistencyError(PencilError, RuntimeError):
    """A constructed object failed its own defining conditions."""


class SearchError(PencilError, RuntimeError):
    """Root search could not produce a reliable winding number."""


class ConditionViolation(PencilError, RuntimeError):
    """A disjointness condition (S or S') failed; carries the offending eigenvalue."""

    def __init__(self, message: str, lam):
        self.lam = complex(lam)
        super().__init__(f"{message} (lambda={self.lam!r})")


class InverseError(PencilError, RuntimeError):
    def __init__(self, message: str, trace=None):
        self.trace = list(trace or [])
        super().__init__(message)
