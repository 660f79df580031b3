"""Exception hierarchy shared by every ghostop module."""


class GhostopError(Exception):
    """Base class for all library errors."""


class UsageError(GhostopError, ValueError):
    """An API was called with arguments that violate its preconditions."""


class ConfigurationError(GhostopError, ValueError):
    """A boundary, partition or config description is inconsistent."""


class UnsupportedOperationError(GhostopError, NotImplementedError):
    pass


class StagingError(GhostopError):
    """Stage-1 compilation could not resolve a predicate or parameter."""


class DataError(GhostopError, ValueError):
    """Sparse storage arrays violate their structural invariants."""


class OutOfBoundsError(GhostopError, IndexError):
    """A kernel tried to read a column that is not stored locally."""


class TransportError(GhostopError, RuntimeError):
    pass
