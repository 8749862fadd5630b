"""Shared exception types, mapped to CLI exit codes."""


class ValidationError(ValueError):
    """A network file or graph value violates a structural invariant (exit 2)."""


class NotConnectedError(ValidationError):
    """Operation requires a connected network: some vertex reaches no open edge."""


class BudgetExceeded(RuntimeError):
    """An enumeration or contraction exceeds its configured budget (exit 3)."""


class LemmaViolation(AssertionError):
    """A combinatorial identity that must hold was observed to fail (exit 4)."""
