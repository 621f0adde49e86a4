class HeatInverseError(Exception):
    """Base class for every error raised by this package."""


class SpectralOverflowError(HeatInverseError, ArithmeticError):
    def __init__(self, message: str, mode: int | None = None, factor: float | None = None):
        super().__init__(message)
        self.mode = mode
        self.factor = factor


class SpectralDomainError(HeatInverseError, ValueError):
    def __init__(self, message: str, mode: int | None = None):
        super().__init__(message)
        self.mode = mode


class GridMismatchError(HeatInverseError, ValueError):
    pass


class ScheduleError(HeatInverseError, ValueError):
    pass


class NoiseLevelError(HeatInverseError, ValueError):
    pass


class ConfigError(HeatInverseError, ValueError):
    pass
