"""Exception types shared across the toolkit."""


class SubalignError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(SubalignError):
    """Incompatible shapes, invalid hyperparameters, or malformed configs."""


class ValidationError(SubalignError):
    """Input data violates a documented precondition (bad values)."""


class DegenerateBatchError(SubalignError):
    """A batch whose pairwise squared distances are all zero; no bandwidth exists."""


class EmptyOverlapError(SubalignError):
    """No class is present in both domains; the local discrepancy is undefined."""


class ParseError(SubalignError):
    """A data file could not be parsed; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
