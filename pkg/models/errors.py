from typing import Optional


class MsmlError(Exception):
    """Base error; ``stage`` selects the process exit code"""
    stage = 'fit'

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage


class ConfigError(MsmlError, ValueError):
    stage = 'config'


class IngestError(MsmlError, ValueError):
    stage = 'ingest'

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"line {row}: {message}"
        super().__init__(message)


class DimensionError(MsmlError, ValueError):
    def __init__(self, expected: int, actual: int, what: str = 'covariate vector'):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what} has length {actual}, expected D={expected}")


class ShapeMismatchError(MsmlError, ValueError):
    pass


class DegenerateChainError(MsmlError, ValueError):
    pass


class CollinearityError(MsmlError, ValueError):
    pass


class ConvergenceError(MsmlError):
    def __init__(self, message: str, last_iterate=None, gradient_norm: float = float('nan')):
        self.last_iterate = last_iterate
        self.gradient_norm = gradient_norm
        super().__init__(f"{message} (gradient max-norm {gradient_norm:.3g})")


class SeparationError(MsmlError):
    pass


class DegenerateInformationError(MsmlError):
    pass


class SampleSizeError(MsmlError, ValueError):
    stage = 'diagnostic'


class SparseDataError(MsmlError):
    stage = 'diagnostic'


class SingularCovarianceError(MsmlError):
    stage = 'diagnostic'


class UndefinedCorrelationError(MsmlError, ValueError):
    stage = 'diagnostic'
