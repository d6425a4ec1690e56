"""Exception types shared across the package."""


class DPXplainError(Exception):
    """Base class for all engine errors."""


class SchemaError(DPXplainError):
    """Schema declaration is invalid or data does not conform to it."""


class DomainError(DPXplainError):
    """A value falls outside a declared, data-independent domain."""


class QuestionError(DPXplainError):
    """A user question is malformed (same group twice, no nonzero weight…)."""


class CalibrationError(DPXplainError):
    """Noise calibration received an unusable parameter (e.g. rho <= 0)."""


class InsufficientBudgetError(DPXplainError):
    """A charge would exceed the session's total privacy budget."""

    def __init__(self, message: str, *, requested: float, remaining: float):
        super().__init__(message)
        self.requested = requested
        self.remaining = remaining


class PhaseOrderError(DPXplainError):
    """A phase was requested before its prerequisite phase completed."""


class DegenerateDivisorError(DPXplainError):
    """The relative-influence divisor is zero; the table must fall back to raw influence."""
