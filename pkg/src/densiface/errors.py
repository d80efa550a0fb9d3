"""Exception hierarchy shared by all densiface modules."""


class DensifaceError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(DensifaceError):
    """Inconsistent configuration, e.g. frame dimensions not matching intrinsics."""


class UsageError(DensifaceError):
    """An operation was called outside its contract (bad arguments, missing data)."""


class FormatError(DensifaceError):
    """A file or document could not be parsed or validated."""


class UnsupportedCascadeError(FormatError):
    """The cascade file uses a feature variant this detector does not evaluate."""


class NoFaceError(DensifaceError):
    """No face was detected and no override rectangle was supplied."""


class SolverError(DensifaceError):
    """The interpolation linear system could not be solved."""
