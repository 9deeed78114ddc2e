"""Exception hierarchy shared by every fracheat module"""


class FracHeatError(Exception):
    """Root of all fracheat errors"""


class ConfigError(FracHeatError):
    """Invalid experiment configuration.

    Args:
        field: dotted path of the offending config entry, e.g. ``params.a``
        message: what is wrong with it
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ComputeError(FracHeatError):
    """Root of numerical failures raised by the compute modules"""


class OutOfRange(ComputeError, ValueError):
    pass


class QuadratureFailure(ComputeError):
    pass


class GridTooCoarse(ComputeError):
    pass


class SingularityBlowup(ComputeError):
    pass


class NoConvergence(ComputeError):
    pass


class TruncationTooTight(ComputeError):
    pass


class Blowup(ComputeError):
    pass


class InsufficientLadder(ComputeError):
    pass


class InsufficientLags(ComputeError):
    pass


class InsufficientReplicates(ComputeError):
    pass


class GridMismatch(ComputeError):
    pass


class AcceptanceFailure(FracHeatError):
    """One or more acceptance checks in a report did not pass"""
