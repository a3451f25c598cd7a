"""Exceptions raised across btdkit."""


class BtdkitError(Exception):
    """Base class for every error btdkit raises on purpose"""


class TensorShapeError(BtdkitError, ValueError):
    """Array shapes or lengths do not conform"""


class NonFiniteValueError(BtdkitError, ValueError):
    """A NaN or Inf reached a constructor"""

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"non-finite value {value!r} at linear offset {index}")


class ConfigError(BtdkitError, ValueError):
    pass


class NnlsIterationError(BtdkitError):
    """Active-set iteration cap hit; `best` is the last feasible iterate"""

    def __init__(self, message: str, best):
        self.best = best
        super().__init__(message)


class DivergenceError(BtdkitError):
    """Objective became non-finite; `report` holds the trace up to that sweep"""

    def __init__(self, message: str, report):
        self.report = report
        super().__init__(message)


class AlignmentError(BtdkitError, ValueError):
    pass


class SampleFileError(BtdkitError, ValueError):
    """Concentration CSV could not be turned into an AirTensor"""
