from typing import Optional


class CrcError(Exception):
    """Base class for engine errors"""


class ValidationError(CrcError, ValueError):
    """Invalid input or configuration; maps to exit code 1"""


class RangeError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class OrderingError(ValidationError):
    pass


class ConstraintError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class ParseError(ValidationError):

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StateConsistencyError(CrcError):
    pass


class EstimatorUndefinedError(CrcError):

    def __init__(self, message: str, t_index: Optional[int] = None):
        self.t_index = t_index
        super().__init__(message)


class AdmissibilityError(CrcError):
    """Calibrated CIR drift is negative; the path cannot continue"""

    def __init__(self, t: float, theta0: float, path: Optional[int] = None):
        self.t = t
        self.theta0 = theta0
        self.path = path
        where = f" on path {path}" if path is not None else ""
        super().__init__(f"theta(0) = {theta0:.6g} < 0 at t = {t:.6f}{where}")


class EmptyEnsembleError(CrcError):
    pass
