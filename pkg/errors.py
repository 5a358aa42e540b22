class DelayNormError(Exception):
    """Base class for every error raised by the delay norm library"""


class ModelError(DelayNormError):
    """A system description is malformed (dimensions, delays, SISO shape)"""


class CausalityError(DelayNormError):
    """U^T A_0 V is singular, so the asymptotic transfer function is undefined"""

    def __init__(self, message: str, rcond: float = 0.0):
        super().__init__(message)
        self.rcond = rcond


class PoleProximityError(DelayNormError):
    """A transfer function was evaluated (numerically) at a characteristic root"""

    def __init__(self, s: complex, rcond: float):
        super().__init__(f"s = {s} is numerically a pole (rcond = {rcond:.3e})")
        self.s = s
        self.rcond = rcond


class StabilityViolationError(DelayNormError):
    """The system is not (strongly) exponentially stable"""


class AsymptoticSingularityError(StabilityViolationError):
    """The asymptotic pencil is singular, so the asymptotic norm is unbounded"""


class EigenSolverError(DelayNormError):
    """The dense generalized eigenvalue solver failed"""

    def __init__(self, message: str, size: int):
        super().__init__(f"{message} (pencil size {size})")
        self.size = size


class ZpkExtractionError(DelayNormError):
    """The zero-pole-gain form does not reproduce the descriptor realization"""


class SystemFileError(DelayNormError):
    """A system description file could not be read or is malformed"""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
