"""Exception hierarchy.

Everything raised on purpose derives from :class:`FullInterpError`.
:class:`ValidationError` covers bad inputs (the CLI maps it to exit code 1);
the remaining errors are runtime failures (exit code 2).
"""


class FullInterpError(Exception):
    """Base class for all package errors."""


class ValidationError(FullInterpError, ValueError):
    """Input rejected by a contract check."""


class InvalidArgument(ValidationError):
    pass


class ConstraintViolation(ValidationError):
    pass


class OutOfBounds(ValidationError):
    pass


class KindMismatch(ValidationError):
    pass


class EmptyRegion(ValidationError):
    pass


class SchemaViolation(ValidationError):
    pass


class IncompleteConfiguration(ValidationError):
    pass


class InvalidTrainingSet(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class InvalidComparison(ValidationError):
    pass


class InvalidDataset(ValidationError):
    pass


class ParseError(ValidationError):
    """Malformed document or image; the message names file and position."""


class UnsupportedFormat(ValidationError):
    pass


class FingerprintMismatch(ValidationError):
    pass


class UninterpretablePatch(FullInterpError):
    """No complete configuration can be assembled from the candidates."""

    def __init__(self, part, message=None):
        self.part = part
        super().__init__(message or f"uninterpretable patch: no candidates for part {part!r}")


class TooLarge(FullInterpError):
    pass
