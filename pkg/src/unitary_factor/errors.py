"""Exception types raised across the package."""


class FactorizeError(Exception):
    """Base class; ``stage`` names the pipeline stage when one applies."""

    def __init__(self, message, stage=None):
        super().__init__(message if stage is None else f"[{stage}] {message}")
        self.stage = stage


class ClassOverflow(FactorizeError):
    pass


class NotHermitian(FactorizeError):
    pass


class DomainViolation(FactorizeError):
    pass


class UnsupportedClass(FactorizeError):
    pass


class NotIsometricColumn(FactorizeError):
    pass


class DimensionObstruction(FactorizeError):
    pass


class UnsupportedDefect(FactorizeError):
    pass


class NotUnitary(FactorizeError):
    pass
