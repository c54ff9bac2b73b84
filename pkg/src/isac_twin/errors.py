"""Exception and warning types shared across the package."""


class IsacError(Exception):
    """Base class for all package errors."""


class DegenerateGeometry(IsacError):
    """Vehicle sits at (or passes through) a singular point of the polar model."""


class DimensionMismatch(IsacError):
    pass


class BeamNull(IsacError):
    """Beam gain toward the target is too small for a usable echo."""


class SingularInnovation(IsacError):
    pass


class SingularPrior(IsacError):
    pass


class InfeasibleSensing(IsacError):
    """Requested sensing threshold exceeds what any unit-norm beam can deliver."""

    def __init__(self, message, lambda_max=None):
        super().__init__(message)
        self.lambda_max = lambda_max


class SwapBudgetExceeded(IsacError):
    pass


class FormatError(IsacError):
    """Malformed exchange or dataset file; carries line/field diagnostics."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field


class ConfigError(IsacError):
    def __init__(self, message, key=None):
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key


class FallbackUsed(UserWarning):
    """The residual-driven Kalman gain was rejected in favour of the standard gain."""
