"""Exception types and the violation record shared by the validators."""

from dataclasses import dataclass


class AfschedError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(AfschedError, ValueError):
    """Raised when an input (instance, parameters, flags) is malformed."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ContractError(AfschedError, RuntimeError):
    """Raised when a precondition of an operation is violated by the caller,
    or when an internal invariant fails (solver output that does not
    validate, for example)."""


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str

    def __str__(self):
        return f"[{self.rule}] {self.message}"


class InfeasibleError(AfschedError):
    """Raised when an instance admits no schedule (only possible with an
    at-least demand)."""
