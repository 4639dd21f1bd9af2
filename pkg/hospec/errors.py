class HospecError(RuntimeError):
    exit_code = 3

    def __init__(self, message: str, *, field: str = None):
        super().__init__(message)
        self.message = message
        self.field = field

    def to_dict(self) -> dict:
        report = {
            "status": "error",
            "error": type(self).__name__,
            "message": self.message,
        }
        if self.field is not None:
            report["field"] = self.field
        return report


class ConfigError(HospecError):
    """Malformed configuration or input file."""

    exit_code = 64


class OperatorError(HospecError):
    """Invalid coefficient matrix, boundary configuration or dimension mismatch."""

    exit_code = 64


class DataMismatchError(HospecError):
    exit_code = 64


class PropagationError(HospecError):
    pass


class PoleProximityError(HospecError):
    pass


class LaurentConvergenceError(HospecError):
    pass


class RootFindingError(HospecError):
    pass


class SingularSystemError(HospecError):
    pass


class ClassWViolation(HospecError):
    """Raised when located eigenvalues are not simple.

    Carries the diagnostic report and whatever spectral data was assembled,
    so callers can still persist it.
    """

    exit_code = 2

    def __init__(self, message: str, *, report=None, partial=None):
        super().__init__(message)
        self.report = report
        self.partial = partial

    def to_dict(self) -> dict:
        report = super().to_dict()
        if self.report is not None:
            report["class_w"] = self.report.to_dict()
        return report
