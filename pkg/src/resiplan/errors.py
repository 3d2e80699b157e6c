"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Vector or matrix shapes do not match the instance."""


class DataError(ValueError):
    """Malformed input data (non-finite features, bad file contents)."""


class CalibrationError(ValueError):
    """Observation set too small to split, fit, or calibrate."""


class CoverageError(ValueError):
    """Requested miscoverage level is unachievable for the calibration size."""


class SimulationError(RuntimeError):
    """Outage simulation failed to converge within the step cap."""


class NumericalError(RuntimeError):
    """LP kernel stalled past its pivot budget or certification failed."""


class ResourceLimitError(RuntimeError):
    """An enumeration or branch-and-bound guard was exceeded.

    Carries the best incumbent and bound known at the point of failure when
    the caller can make use of them.
    """

    def __init__(self, message, incumbent=None, bound=None):
        super().__init__(message)
        self.incumbent = incumbent
        self.bound = bound
