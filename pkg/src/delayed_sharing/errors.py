"""Exception hierarchy shared across the package."""


class DelayedSharingError(Exception):
    """Base class for all package errors."""


class ParseError(DelayedSharingError):
    """Problem file is not syntactically well formed."""


class SchemaError(DelayedSharingError):
    """Problem file is valid JSON but misses or mistypes a required field."""


class InvalidProblemError(DelayedSharingError):
    """A ProblemSpec violates its invariants (carries the validation report)."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{v.path}: {v.message}" for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"invalid problem: {lines}{more}")


class DomainError(DelayedSharingError, ValueError):
    """An index (typically a time step) is outside its valid range."""


class BudgetError(DelayedSharingError):
    """Enumeration would exceed a configured budget; message reports counts."""


class UnreachableObservationError(DelayedSharingError):
    """A conditioning observation has probability zero; no belief exists."""


class OffDesignHistoryError(DelayedSharingError):
    """A common history is inconsistent with the policy being replayed."""


class PreconditionError(DelayedSharingError):
    """An analysis probe was invoked on an instance outside its premises."""
