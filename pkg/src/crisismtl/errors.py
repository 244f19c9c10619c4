class ValidationError(ValueError):
    """Input data or configuration violates a declared contract."""


class TrainingError(RuntimeError):
    """Training hit a non-finite loss or gradient."""


class MetricWarning(UserWarning):
    """A metric fell back to its declared default (e.g. nothing to average)."""
