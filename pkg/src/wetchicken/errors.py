"""Package-wide exception types."""


class ContractViolation(ValueError):
    """An argument violated a documented precondition. Inputs are rejected, never repaired."""


class NumericalError(RuntimeError):
    """A numerical routine failed beyond recovery (e.g. Cholesky after the full jitter ladder)."""
