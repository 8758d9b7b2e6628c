"""Exception hierarchy shared by every module.

Each class carries the exit code the command line maps it to:
2 for bad input, 3 for numerical failures, 4 for protocol violations.
"""


class CoralError(Exception):
    exit_code = 1


class InputError(CoralError, ValueError):
    exit_code = 2


class ShapeError(InputError):
    pass


class InvalidInputError(InputError):
    pass


class ParseError(InputError):
    pass


class InsufficientSamplesError(InputError):
    pass


class InvalidRankError(InputError):
    pass


class UnsupportedPowerError(InputError):
    pass


class ConfigError(InputError):
    pass


class ReportWriteError(InputError):
    pass


class NumericalError(CoralError):
    exit_code = 3


class NotPSDError(NumericalError):
    pass


class SingularCovarianceError(NumericalError):
    pass


class ProtocolError(CoralError):
    exit_code = 4


class DegenerateLabelsError(ProtocolError):
    pass


class StratificationError(ProtocolError):
    pass


def annotate(exc, context):
    """Return a copy of `exc` (same class) with `context` prefixed to its message."""
    annotated = exc.__class__(f"{context}: {exc}")
    annotated.__cause__ = exc
    return annotated
