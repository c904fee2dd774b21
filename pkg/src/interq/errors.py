"""Exception hierarchy.

Validation problems (bad configs, inconsistent matrices) derive from
:class:`ValidationError`; everything that goes wrong while computing derives
from :class:`InterqRuntimeError`. The CLI maps the two families to exit codes
1 and 2.
"""


class InterqError(Exception):
    pass


class ValidationError(InterqError, ValueError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NotPositiveDefinite(ValidationError):
    pass


class NotPSD(ValidationError):
    pass


class Uncontrollable(ValidationError):
    pass


class Unobservable(ValidationError):
    pass


class GammaOutOfRange(ValidationError):
    pass


class InterqRuntimeError(InterqError, RuntimeError):
    pass


class NoConvergence(InterqRuntimeError):
    pass


class NumericalOverflow(InterqRuntimeError):
    def __init__(self, message, rollout_index=None):
        super().__init__(message)
        self.rollout_index = rollout_index


class BufferNotReady(InterqRuntimeError):
    pass


class Divergence(InterqRuntimeError):
    pass


class CorruptCheckpoint(InterqRuntimeError):
    pass


class VersionMismatch(InterqRuntimeError):
    pass


class IncompatibleCheckpoint(InterqRuntimeError):
    pass


class DegenerateFit(InterqRuntimeError):
    pass


class GridTooSmall(InterqRuntimeError):
    pass
