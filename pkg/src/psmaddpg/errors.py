"""Exception types shared across the package."""


class PSMADDPGError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(PSMADDPGError, ValueError):
    pass


class InvalidSpecError(PSMADDPGError, ValueError):
    pass


class NumericError(PSMADDPGError, ArithmeticError):
    """Raised when a non-finite value would enter a net, memory or environment."""


class InsufficientDataError(PSMADDPGError, ValueError):
    pass


class ConfigError(PSMADDPGError, ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
